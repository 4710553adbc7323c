use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use strainve_bench::{m3_dataset, options};
use strainve_core::estimation::{solve, Method};
use strainve_core::inference::mc_reference;
use strainve_core::linalg::Matrix;
use strainve_core::pipeline::{fit_with_variance, NuisanceFits};
use strainve_core::simulation::{ScenarioConfig, TrialGenerator};

fn estimation(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for n in [1200, 5000] {
        let ds = m3_dataset(n);
        let nuisance = NuisanceFits::fit(&ds, &Method::ALL, &options()).unwrap();
        for m in Method::ALL {
            group.bench_with_input(BenchmarkId::new(m.label(), n), &ds, |b, ds| {
                b.iter(|| solve(black_box(ds), m, nuisance.completeness.as_ref(), nuisance.cause.as_ref()).unwrap())
            });
        }
    }
    group.finish();
}

fn variance(c: &mut Criterion) {
    let ds = m3_dataset(1200);
    let opts = options();
    let nuisance = NuisanceFits::fit(&ds, &Method::ALL, &opts).unwrap();
    let mut group = c.benchmark_group("fit_with_variance");
    for m in [Method::Ipw, Method::Aipw] {
        group.bench_function(m.label(), |b| {
            b.iter(|| fit_with_variance(black_box(&ds), m, &nuisance, opts.ipw_weight).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let cov = Matrix::from_row_slice(2, 2, &[0.02, 0.005, 0.005, 0.015]);
    c.bench_function("mc_reference_1e5", |b| b.iter(|| mc_reference(black_box(&cov), 100_000, 7).unwrap()));
}

fn generation(c: &mut Criterion) {
    let gen = TrialGenerator::new(ScenarioConfig::parse_preset("M3-Aux0").unwrap()).unwrap();
    c.bench_function("generate_trial_1200", |b| b.iter(|| gen.generate(black_box(3)).unwrap()));
}

criterion_group!(benches, estimation, variance, monte_carlo, generation);
criterion_main!(benches);
