use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

const SMALL: &str = r#"
[geometry]
samples = 500

[kac]
returns = 3000
chunks = 4

[tail]
betas = [3.0]
returns = 20000
chunks = 4
hill_k = [200]
bootstrap = 20

[marginal]
n_grid = [100, 300]
replicas = 100
trend_seeds = 2

[excursions]
returns = 20000
chunks = 4

[witness]
paths = 8
n = 500

[jumps]
n = 500
paths = 80
levy_paths = 100
levy_resolution = 50

[metrics]
n_grid = [200, 400]
paths = 6
exact_paths = 2
budget = 150
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cusp-lab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cusp-lab")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = lab(&["frobnicate"]);
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("frobnicate"));
    assert_eq!(code(&lab(&[])), 64);
    assert_eq!(code(&lab(&["tail", "--bogus"])), 64);
}

#[test]
fn help_and_version_succeed() {
    let o = lab(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["table", "iv-curve", "classify", "simulate", "tail", "marginal", "profile", "jumps", "m2-witness", "metrics", "report"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&lab(&["--version"])), 0);
}

#[test]
fn classify_lists_verdicts() {
    let dir = scratch("classify");
    let o = lab(&["classify", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for line in ["m1\tM1", "m2_only\tM2_only", "fails_over\tFails_over", "degenerate\tDegenerate"] {
        assert!(text.lines().any(|l| l == line), "{line}");
    }
    assert!(dir.join("classify.json").exists());
}

#[test]
fn iv_curve_writes_a_table() {
    let dir = scratch("iv");
    let o = lab(&["iv-curve", "--fixture", "m2_only", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let found = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .any(|e| e.file_name().to_string_lossy().ends_with(".csv"));
    assert!(found);
}

#[test]
fn bad_config_names_the_field() {
    let dir = scratch("badcfg");
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, "[marginal]\nfixture = \"nope\"\n").unwrap();
    let o = lab(&["marginal", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("marginal.fixture"));
    let o = lab(&["tail", "--shards", "0"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("shards"));
}

#[test]
fn report_is_byte_identical_for_a_seed() {
    let dir = scratch("report");
    let cfg = dir.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let run = |tag: &str, seed: &str| {
        let out = dir.join(tag);
        let o = lab(&["report", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        let c = code(&o);
        assert!([0, 1, 2].contains(&c), "exit {c}: {}", String::from_utf8_lossy(&o.stderr));
        (c, fs::read(out.join("report.json")).unwrap())
    };
    let (c1, a) = run("a", "7");
    let (c2, b) = run("b", "7");
    assert_eq!(c1, c2);
    assert_eq!(a, b);
    let json = String::from_utf8(a).unwrap();
    let status = ["pass", "inconclusive", "fail"][[0, 2, 1].iter().position(|&x| x == c1).unwrap()];
    assert!(json.contains(&format!("\"status\": \"{status}\"")) || json.contains(&format!("\"status\":\"{status}\"")));
    let (_, other) = run("c", "8");
    assert_ne!(json.as_bytes(), &other[..]);
}
