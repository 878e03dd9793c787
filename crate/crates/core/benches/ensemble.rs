use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracctrl::backward::{solve_truncated, Backend, RegressionBasis};
use fracctrl::fracnoise::{HurstParam, InnovationSystem, NoiseEnsemble};
use fracctrl::invest::{run_experiment, InvestConfig};
use fracctrl::smp::CostDriver;

/// Execution modes to compare: a one-thread pool against the default pool
/// when built with `parallel`, the sequential fallback otherwise.
#[cfg(feature = "parallel")]
mod mode {
    pub struct Mode(Option<rayon::ThreadPool>);

    pub fn all() -> Vec<(String, Mode)> {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        vec![
            ("threads=1".to_string(), Mode(Some(one))),
            (format!("default-pool-{}", rayon::current_num_threads()), Mode(None)),
        ]
    }

    impl Mode {
        pub fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
            match &self.0 {
                Some(p) => p.install(f),
                None => f(),
            }
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod mode {
    pub struct Mode;

    pub fn all() -> Vec<(String, Mode)> {
        vec![("sequential".to_string(), Mode)]
    }

    impl Mode {
        pub fn run<R>(&self, f: impl FnOnce() -> R) -> R {
            f()
        }
    }
}

fn sampling(c: &mut Criterion) {
    let sys = InnovationSystem::build(HurstParam::new(0.75).unwrap(), 64).unwrap();
    let mut g = c.benchmark_group("sample_ensemble_20k");
    for (name, mode) in mode::all() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| mode.run(|| NoiseEnsemble::sample(&sys, 1, 20_000)))
        });
    }
    g.finish();
}

fn investment(c: &mut Criterion) {
    let cfg = InvestConfig {
        horizon: 50,
        paths: 10_000,
        ..Default::default()
    };
    let mut g = c.benchmark_group("invest_run_10k");
    g.sample_size(10);
    for (name, mode) in mode::all() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| mode.run(|| run_experiment(&cfg).unwrap()))
        });
    }
    g.finish();
}

fn regression(c: &mut Criterion) {
    let cfg = InvestConfig {
        horizon: 30,
        paths: 20_000,
        ..Default::default()
    };
    let res = run_experiment(&cfg).unwrap();
    let discount = cfg.discount().unwrap();
    let backend = Backend::Regression(RegressionBasis::default());
    let mut g = c.benchmark_group("cost_bsde_regression_20k");
    g.sample_size(10);
    for (name, mode) in mode::all() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| {
                mode.run(|| {
                    solve_truncated(&CostDriver(&res.model), &res.state, &res.noise, &discount, cfg.horizon, &backend).unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, sampling, investment, regression);
criterion_main!(benches);
