use std::f64::consts::{FRAC_PI_4, PI};

use lyapunov_core::control::{design_schedule, DesignOptions, DesignReport};
use lyapunov_core::dynamics::IntegratorConfig;
use lyapunov_core::models::{
    four_level_model, FourLevelParams, LindbladOrientation, ModelFamily, Perturbation,
    PerturbationAxis, TwoLevelParams,
};
use lyapunov_core::robustness::{
    noise_ensemble, replay_open_loop, sweep_uncertainty, Execution, NoiseMode, NoiseSpec,
    SweepAxis, SweepGrid,
};

fn fig1() -> ModelFamily {
    ModelFamily::TwoLevel(TwoLevelParams {
        omega: 4.0,
        beta0: FRAC_PI_4,
        phi0: FRAC_PI_4,
    })
}

fn fig4() -> FourLevelParams {
    FourLevelParams {
        omega_rabi: 5.0,
        phi: PI / 5.0,
        delta: [4.0, 2.0, 2.0],
        gammas: [1.0 / 3.0; 3],
        betas: [PI / 5.0, PI / 4.0, PI / 3.0],
        orientation: LindbladOrientation::Decay,
    }
}

fn design(family: &ModelFamily, t_final: f64) -> DesignReport {
    let sys = family.nominal().unwrap();
    let config = IntegratorConfig::new(1e-3, t_final, 10).unwrap();
    design_schedule(
        &sys.model,
        &sys.rho0,
        &sys.rho_d,
        &config,
        &DesignOptions::default(),
    )
    .unwrap()
}

#[test]
fn noiseless_replay_retraces_design() {
    for family in [fig1(), ModelFamily::FourLevel(fig4())] {
        let report = design(&family, 3.0);
        let sys = family.nominal().unwrap();
        let out = replay_open_loop(
            &sys.model,
            &sys.rho0,
            &report.schedule,
            &report.target,
            &NoiseSpec::none(),
            0,
            &report.config,
        )
        .unwrap();
        assert!(!out.fingerprint_mismatch);
        assert_eq!(out.times, report.times);
        for (a, b) in out.fidelity.iter().zip(&report.fidelity_trace) {
            assert!((a - b).abs() < 1e-8, "replay {a} vs design {b}");
        }
    }
}

#[test]
fn zero_width_noise_matches_noiseless_for_any_seed() {
    let family = fig1();
    let report = design(&family, 2.0);
    let sys = family.nominal().unwrap();
    let quiet = noise_ensemble(
        (&report).into(),
        &sys.model,
        &sys.rho0,
        &NoiseSpec::none(),
        1,
        Execution::Sequential,
    )
    .unwrap();
    for seed in [0, 5, u64::MAX] {
        let spec = NoiseSpec::uniform(0.0, 0.0, NoiseMode::PerStep, seed).unwrap();
        let e = noise_ensemble(
            (&report).into(),
            &sys.model,
            &sys.rho0,
            &spec,
            1,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(e.trial0, quiet.trial0);
        assert_eq!(e.stddev.iter().copied().fold(0.0, f64::max), 0.0);
    }
}

#[test]
fn ensemble_trial0_is_a_single_replay() {
    let family = fig1();
    let report = design(&family, 2.0);
    let sys = family.nominal().unwrap();
    let spec = NoiseSpec::uniform(-1.0, 1.0, NoiseMode::PerStep, 11).unwrap();
    let single = replay_open_loop(
        &sys.model,
        &sys.rho0,
        &report.schedule,
        &report.target,
        &spec,
        0,
        &report.config,
    )
    .unwrap();
    let e = noise_ensemble(
        (&report).into(),
        &sys.model,
        &sys.rho0,
        &spec,
        8,
        Execution::Parallel,
    )
    .unwrap();
    assert_eq!(e.trial0, single.fidelity);
    assert_eq!(e.finals.len(), 8);
    for k in 0..e.times.len() {
        assert!(e.min[k] <= e.mean[k] && e.mean[k] <= e.max[k]);
        assert!(e.max[k] <= 1.0 + 1e-8 && e.min[k] >= 0.0);
    }
}

#[test]
fn sweep_is_order_independent() {
    let family = fig1();
    let report = design(&family, 2.0);
    let grid = SweepGrid {
        axis1: SweepAxis {
            axis: PerturbationAxis::DeltaX,
            lo: -1.0,
            hi: 1.0,
            count: 5,
        },
        axis2: SweepAxis {
            axis: PerturbationAxis::DeltaZ,
            lo: -1.0,
            hi: 1.0,
            count: 3,
        },
    };
    let base = family.zero_perturbation();
    let seq = sweep_uncertainty(
        (&report).into(),
        &family,
        &base,
        &grid,
        Execution::Sequential,
    )
    .unwrap();
    let par =
        sweep_uncertainty((&report).into(), &family, &base, &grid, Execution::Parallel).unwrap();
    assert_eq!(seq.values, par.values);
    assert_eq!(seq.values.len(), 15);
    // centre cell is the unperturbed plant
    assert!((seq.at(2, 1) - report.final_fidelity()).abs() < 1e-8);
    assert!(seq.values.iter().all(|v| (0.0..=1.0 + 1e-8).contains(v)));
    assert_eq!(seq.mismatched_plants, 14);

    let mut a = Vec::new();
    let mut b = Vec::new();
    seq.write_csv(&mut a, &[]).unwrap();
    par.write_csv(&mut b, &[]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_rejects_foreign_axes() {
    let family = ModelFamily::FourLevel(fig4());
    let report = design(&family, 0.1);
    let grid = SweepGrid {
        axis1: SweepAxis {
            axis: PerturbationAxis::DBeta0,
            lo: -1.0,
            hi: 1.0,
            count: 3,
        },
        axis2: SweepAxis {
            axis: PerturbationAxis::DeltaZ,
            lo: -1.0,
            hi: 1.0,
            count: 3,
        },
    };
    let base = family.zero_perturbation();
    assert!(sweep_uncertainty(
        (&report).into(),
        &family,
        &base,
        &grid,
        Execution::Sequential
    )
    .is_err());
    let flat = SweepGrid {
        axis1: SweepAxis {
            axis: PerturbationAxis::DeltaX,
            lo: 0.0,
            hi: 0.0,
            count: 2,
        },
        ..grid
    };
    assert!(flat.validate(&family).is_err());
}

#[test]
fn one_sided_per_run_noise_hurts_four_level() {
    let params = fig4();
    let (sys, _) = four_level_model(&params).unwrap();
    let family = ModelFamily::FourLevel(params);
    let report = design(&family, 10.0);
    let one_sided = NoiseSpec::uniform(-1.0, 0.0, NoiseMode::PerRun, 3).unwrap();
    let two_sided = NoiseSpec::uniform(-1.0, 1.0, NoiseMode::PerRun, 3).unwrap();
    let mean = |spec: &NoiseSpec| {
        noise_ensemble(
            (&report).into(),
            &sys.model,
            &sys.rho0,
            spec,
            40,
            Execution::Parallel,
        )
        .unwrap()
        .mean_final()
    };
    assert!(mean(&one_sided) < mean(&two_sided));
}

#[test]
fn perturbation_must_match_family() {
    let family = fig1();
    let sys = family.nominal().unwrap();
    let wrong = ModelFamily::FourLevel(fig4()).zero_perturbation();
    assert!(family.plant(&sys.model, &wrong).is_err());
    let mut d: Perturbation = family.zero_perturbation();
    d.set(PerturbationAxis::DPhi0, 0.1).unwrap();
    assert!(family.plant(&sys.model, &d).is_ok());
}
