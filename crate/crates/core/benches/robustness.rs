use std::f64::consts::FRAC_PI_4;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lyapunov_core::control::{design_schedule, DesignOptions, DesignReport};
use lyapunov_core::dynamics::IntegratorConfig;
use lyapunov_core::models::{ModelFamily, PerturbationAxis, TwoLevelParams};
use lyapunov_core::robustness::{
    noise_ensemble, sweep_uncertainty, Execution, NoiseMode, NoiseSpec, SweepAxis, SweepGrid,
};

const PATHS: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn setup() -> (ModelFamily, DesignReport) {
    let family = ModelFamily::TwoLevel(TwoLevelParams {
        omega: 4.0,
        beta0: FRAC_PI_4,
        phi0: FRAC_PI_4,
    });
    let sys = family.nominal().unwrap();
    let config = IntegratorConfig::new(1e-3, 2.0, 10).unwrap();
    let report = design_schedule(
        &sys.model,
        &sys.rho0,
        &sys.rho_d,
        &config,
        &DesignOptions::default(),
    )
    .unwrap();
    (family, report)
}

fn sweep(c: &mut Criterion) {
    let (family, report) = setup();
    let axis = |axis| SweepAxis {
        axis,
        lo: -1.0,
        hi: 1.0,
        count: 6,
    };
    let grid = SweepGrid {
        axis1: axis(PerturbationAxis::DeltaX),
        axis2: axis(PerturbationAxis::DeltaZ),
    };
    let base = family.zero_perturbation();
    let mut group = c.benchmark_group("sweep 6x6");
    group.sample_size(10);
    for (name, exec) in PATHS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                sweep_uncertainty(black_box((&report).into()), &family, &base, &grid, exec).unwrap()
            })
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let (family, report) = setup();
    let sys = family.nominal().unwrap();
    let noise = NoiseSpec::uniform(-1.0, 1.0, NoiseMode::PerStep, 0).unwrap();
    let mut group = c.benchmark_group("ensemble 32 trials");
    group.sample_size(10);
    for (name, exec) in PATHS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                noise_ensemble(
                    black_box((&report).into()),
                    &sys.model,
                    &sys.rho0,
                    &noise,
                    32,
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, ensemble);
criterion_main!(benches);
