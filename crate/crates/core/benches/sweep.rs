use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cdn_prs::market_config::RunConfig;
use cdn_prs::par::Exec;
use cdn_prs::plan_engine::{sweep, PlanId, Scenario};
use cdn_prs::trace_io::synthesize_all;

fn bench_sweep(c: &mut Criterion) {
    let cfg = RunConfig::shipped();
    let days = cfg.sim.total_days() as usize;
    let traces = synthesize_all(&cfg.profiles, days, None, Exec::Sequential).unwrap();
    let scenario = Scenario::prepare(&traces, &cfg, Exec::Parallel).unwrap();

    let mut g = c.benchmark_group("sweep_34_runs");
    g.sample_size(20);
    for (name, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sweep(&PlanId::ALL, &[6, 3], &scenario, &cfg, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("forecast_prepare");
    g.sample_size(10);
    for (name, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| Scenario::prepare(&traces, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
