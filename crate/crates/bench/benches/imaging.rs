use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sarmover_cli::bench::{bench_profile, run_once, Algorithm};

const NC: usize = 4;

fn sizes(alg: Algorithm) -> &'static [usize] {
    match alg {
        Algorithm::RoadBased | Algorithm::Static2d => &[32, 64, 128],
        _ => &[16, 32],
    }
}

fn imaging(c: &mut Criterion) {
    for alg in Algorithm::ALL {
        let mut group = c.benchmark_group(alg.id());
        group.sample_size(10);
        for &n in sizes(alg) {
            let profile = bench_profile(n);
            group.bench_with_input(BenchmarkId::from_parameter(n), &profile, |b, p| {
                b.iter(|| run_once(alg, p, NC).unwrap())
            });
        }
        group.finish();
    }
}

criterion_group!(benches, imaging);
criterion_main!(benches);
