use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cusp_core::dynamics::Billiard;
use cusp_core::geometry::{build_table, TableConfig};
use cusp_core::inducing::{region_x, simulate_returns, ReturnStats};
use cusp_core::parallel::{map_replicas, ExecMode, StreamFactory};

fn returns(c: &mut Criterion) {
    let table = build_table(&TableConfig::drop(3.0, 1.0, 2.0)).expect("default table");
    let region = region_x(&table);
    let factory = StreamFactory::new(7, "bench");
    let chunks = 16;
    let mut group = c.benchmark_group("first_returns_16x500");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| {
                let parts = map_replicas(mode, 8, chunks, |k| {
                    let billiard = Billiard::new(&table);
                    simulate_returns(&billiard, &region, 500, &mut factory.stream(k as u64))
                });
                let mut all = ReturnStats::default();
                for p in &parts {
                    all.merge(p);
                }
                all.len()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, returns);
criterion_main!(benches);
