use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use cusp_core::inducing::write_archive;
use cusp_core::lab::experiments::{self, LabError};
use cusp_core::lab::{ExperimentConfig, ExperimentReport, Status};
use cusp_core::parallel::ExecMode;

/// Exit status for command-line usage errors.
const EX_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "cusp-lab", version, about = "Billiards with a flat cusp: experiments and reports")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    shards: Option<usize>,
    /// Output directory for JSON reports and CSV tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run replicas on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Boundary checks.
    Table {
        #[command(subcommand)]
        what: TableCommand,
    },
    /// Sample I_v on [0, pi] and write it as CSV.
    IvCurve {
        /// Observable names; all classification fixtures when omitted.
        #[arg(long = "fixture")]
        fixtures: Vec<String>,
    },
    /// Verdicts of the configured fixtures.
    Classify,
    /// Raw simulations.
    Simulate {
        #[command(subcommand)]
        what: SimulateCommand,
    },
    /// Tail index of the return time.
    Tail,
    /// Stable marginal of W_n(1).
    Marginal,
    /// Excursion profile law.
    Profile,
    /// Jump statistics of U_n.
    Jumps,
    /// Mid-excursion overshoot witness.
    M2Witness,
    /// Skorohod distances between W_n and U_n.
    Metrics,
    /// Every experiment, combined.
    Report,
}

#[derive(Subcommand, Debug)]
enum TableCommand {
    /// Reversibility and invariance of mu.
    Check,
}

#[derive(Subcommand, Debug)]
enum SimulateCommand {
    /// First-return times from mu_X and the Kac identity.
    Returns,
}

fn load_config(g: &Global) -> Result<ExperimentConfig, String> {
    let mut cfg = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = g.shards {
        cfg.shards = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.display().to_string();
    }
    if g.sequential {
        cfg.exec = ExecMode::Sequential;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn emit(rep: &ExperimentReport, out: &Path) -> Result<Status, String> {
    rep.write(out).map_err(|e| format!("{}: {e}", out.display()))?;
    print!("{}", rep.summary());
    Ok(rep.status)
}

fn run(cmd: &Command, cfg: &ExperimentConfig) -> Result<Status, String> {
    let out = PathBuf::from(&cfg.out);
    let lab = |e: LabError| e.to_string();
    match cmd {
        Command::Table { what: TableCommand::Check } => emit(&experiments::run_table_check(cfg).map_err(lab)?, &out),
        Command::IvCurve { fixtures } => emit(&experiments::run_iv_curves(cfg, fixtures).map_err(lab)?, &out),
        Command::Classify => {
            let rep = experiments::run_classify(cfg).map_err(lab)?;
            for e in &cfg.classify.expect {
                let key = format!("verdict[{}]", e.fixture);
                println!("{}\t{}", e.fixture, rep.labels.get(&key).map(String::as_str).unwrap_or("?"));
            }
            emit(&rep, &out)
        }
        Command::Simulate { what: SimulateCommand::Returns } => {
            let rep = experiments::run_kac(cfg).map_err(lab)?;
            if cfg.kac.archive > 0 {
                let records = experiments::excursion_archive(cfg).map_err(lab)?;
                fs::create_dir_all(&out).map_err(|e| e.to_string())?;
                let path = out.join("kac_archive.tsv");
                let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                write_archive(std::io::BufWriter::new(file), &records).map_err(|e| e.to_string())?;
            }
            emit(&rep, &out)
        }
        Command::Tail => emit(&experiments::run_tail_experiment(cfg).map_err(lab)?, &out),
        Command::Marginal => emit(&experiments::run_marginal_experiment(cfg).map_err(lab)?, &out),
        Command::Profile => emit(&experiments::run_profile_experiment(cfg).map_err(lab)?, &out),
        Command::Jumps => emit(&experiments::run_jump_experiment(cfg).map_err(lab)?, &out),
        Command::M2Witness => emit(&experiments::run_m2_witness_experiment(cfg).map_err(lab)?, &out),
        Command::Metrics => emit(&experiments::run_metric_experiment(cfg).map_err(lab)?, &out),
        Command::Report => {
            let combined = experiments::run_report(cfg).map_err(lab)?;
            for rep in &combined.experiments {
                emit(rep, &out)?;
            }
            let path = out.join("report.json");
            fs::write(&path, combined.to_json()).map_err(|e| format!("{}: {e}", path.display()))?;
            println!("report [{}]", combined.status);
            Ok(combined.status)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EX_USAGE),
            };
        }
    };
    let cfg = match load_config(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli.command, &cfg) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
