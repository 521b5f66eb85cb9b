use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ricox::kernels::{build_augmented_covariance_with, KernelSpec};
use ricox::metrics::{summarize, Truth};
use ricox::par::Execution;
use ricox::samplers::{run_chains, ChainConfig};
use ricox::simulate::{simulate_thinning, IntensitySpec};
use ricox::{Dataset, Domain, Point};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn covariance(c: &mut Criterion) {
    let domain = Domain::interval(50.0).unwrap();
    let points: Vec<Point> = domain.midpoint_grid(400);
    let kernel = KernelSpec::SquaredExponential {
        amplitude: 1.0,
        inv_length_sq: 0.5,
    };
    let mut group = c.benchmark_group("covariance_400");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                build_augmented_covariance_with(
                    exec,
                    &kernel,
                    &domain,
                    &points,
                    &[domain.full_region()],
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn chains_and_summary(c: &mut Criterion) {
    let spec = IntensitySpec::lambda1();
    let events = simulate_thinning(&spec, &mut ChaCha8Rng::seed_from_u64(1));
    let data = Dataset::events_only(spec.domain, events, spec.domain.midpoint_grid(100)).unwrap();
    let kernel = KernelSpec::BrownianMotion { precision: 1.0 };
    let configs: Vec<ChainConfig> = (0..4)
        .map(|s| ChainConfig {
            n_burnin: 200,
            n_samples: 1000,
            seed: 3,
            stream: s,
            ..Default::default()
        })
        .collect();

    let mut group = c.benchmark_group("four_chains");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_chains(exec, &data, &kernel, &configs))
        });
    }
    group.finish();

    let samples = run_chains(Execution::Parallel, &data, &kernel, &configs[..1])
        .remove(0)
        .unwrap();
    let truth = Truth {
        grid: Some(spec.eval_many(&data.grid).unwrap()),
        observed: None,
    };
    let mut group = c.benchmark_group("summarize");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| summarize(exec, &samples, &truth).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, covariance, chains_and_summary);
criterion_main!(benches);
