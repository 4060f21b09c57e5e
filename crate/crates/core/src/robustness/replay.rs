use crate::control::DesignReport;
use crate::dynamics::{checked_state, rk4, ControlSystemModel, IntegratorConfig, TargetTrajectory};
use crate::error::{Error, Result};
use crate::schedule::ControlSchedule;
use crate::state::{fidelity, DensityMatrix, Physicality};

use super::noise::NoiseSpec;

/// What a replay needs from a design: the schedule, the target trajectory at
/// the recorded times, and the integrator settings that produced both.
#[derive(Debug, Clone, Copy)]
pub struct OpenLoopPlan<'a> {
    pub schedule: &'a ControlSchedule,
    pub target: &'a TargetTrajectory,
    pub config: &'a IntegratorConfig,
}

impl<'a> From<&'a DesignReport> for OpenLoopPlan<'a> {
    fn from(report: &'a DesignReport) -> Self {
        Self {
            schedule: &report.schedule,
            target: &report.target,
            config: &report.config,
        }
    }
}

/// Fidelity series of one open-loop replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub final_state: DensityMatrix,
    pub hygiene: Physicality,
    /// The plant differs from the model the schedule was designed on. This is
    /// expected for perturbed plants and is reported, not rejected.
    pub fingerprint_mismatch: bool,
}

impl ReplayOutcome {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity.last().unwrap()
    }
}

/// Drives `plant` from `rho0` with the stored fields scaled by `1 + δ` and
/// records the fidelity to the target at the times of `target`.
///
/// `trial` selects the noise stream; trial 0 of an ensemble is the same run
/// as a single replay with the same spec.
pub fn replay_open_loop(
    plant: &ControlSystemModel,
    rho0: &DensityMatrix,
    schedule: &ControlSchedule,
    target: &TargetTrajectory,
    noise: &NoiseSpec,
    trial: u64,
    config: &IntegratorConfig,
) -> Result<ReplayOutcome> {
    plant.h0().same_dim(rho0.matrix())?;
    let controls = plant.controls().len();
    if schedule.num_fields() != controls {
        return Err(Error::DimensionMismatch {
            expected: controls,
            found: schedule.num_fields(),
        });
    }
    let steps = config.steps()?;
    let record = config.record_steps()?;
    let t_final = config.time_of(steps);
    let tol = 1e-9 * schedule.spacing();
    if schedule.start_time() > tol || schedule.end_time() < t_final - tol {
        return Err(Error::InvalidParameter(format!(
            "schedule covers [{}, {}] but the replay needs [0, {t_final}]",
            schedule.start_time(),
            schedule.end_time()
        )));
    }
    if target.len() != record.len() {
        return Err(Error::InvalidParameter(format!(
            "target trajectory has {} samples, the integrator records {}",
            target.len(),
            record.len()
        )));
    }
    plant.h0().same_dim(target.state(0).matrix())?;

    let mut sampler = noise.sampler(controls, trial)?;
    let mut times = Vec::with_capacity(record.len());
    let mut series = Vec::with_capacity(record.len());
    let mut hygiene = Physicality::of(rho0.matrix());
    let mut state = rho0.clone();
    let mut next_record = 0;

    for step in 0..=steps {
        let t = config.time_of(step);
        if record.get(next_record) == Some(&step) {
            times.push(t);
            series.push(fidelity(target.state(next_record), &state).map_err(|e| e.at_time(t))?);
            next_record += 1;
        }
        if step == steps {
            break;
        }
        let scales = sampler.step(step);
        let next = rk4(state.matrix(), t, config.dt, |_, s, y| {
            let mut fields = schedule.at(s);
            for (f, k) in fields.iter_mut().zip(scales) {
                *f *= k;
            }
            Ok(plant.rhs(y, &fields))
        })?;
        let (checked, phys) = checked_state(next, config.time_of(step + 1))?;
        hygiene = hygiene.worst(phys);
        state = checked;
    }

    Ok(ReplayOutcome {
        times,
        fidelity: series,
        final_state: state,
        hygiene,
        fingerprint_mismatch: plant.fingerprint() != schedule.model_fingerprint(),
    })
}
