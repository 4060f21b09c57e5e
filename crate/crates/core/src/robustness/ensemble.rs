use std::io::Write;

use crate::dynamics::ControlSystemModel;
use crate::error::{Error, Result};
use crate::schedule::fmt_f64;
use crate::state::{DensityMatrix, Physicality};

use super::exec::Execution;
use super::noise::NoiseSpec;
use super::replay::{replay_open_loop, OpenLoopPlan};

/// Per-time fidelity statistics over independent noisy replays.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Population standard deviation (zero for a single trial).
    pub stddev: Vec<f64>,
    pub trial0: Vec<f64>,
    /// Final fidelity of every trial, in trial order.
    pub finals: Vec<f64>,
    pub hygiene: Physicality,
    pub fingerprint_mismatch: bool,
}

impl EnsembleResult {
    pub fn mean_final(&self) -> f64 {
        self.finals.iter().sum::<f64>() / self.finals.len() as f64
    }

    /// `t,mean,min,max,stddev,trial0` rows after `# ` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "t,mean,min,max,stddev,trial0")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(self.mean[k]),
                fmt_f64(self.min[k]),
                fmt_f64(self.max[k]),
                fmt_f64(self.stddev[k]),
                fmt_f64(self.trial0[k])
            )?;
        }
        Ok(())
    }
}

/// Runs `trials` replays of the schedule on `plant`, trial `k`
/// drawing from noise stream `k` of `noise.seed`.
pub fn noise_ensemble(
    plan: OpenLoopPlan<'_>,
    plant: &ControlSystemModel,
    rho0: &DensityMatrix,
    noise: &NoiseSpec,
    trials: usize,
    exec: Execution,
) -> Result<EnsembleResult> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    noise.validate(plant.controls().len())?;
    let runs = exec.map(trials, |k| {
        replay_open_loop(
            plant,
            rho0,
            plan.schedule,
            plan.target,
            noise,
            k as u64,
            plan.config,
        )
    })?;

    let n = runs[0].times.len();
    let count = trials as f64;
    let mut result = EnsembleResult {
        times: runs[0].times.clone(),
        mean: Vec::with_capacity(n),
        min: Vec::with_capacity(n),
        max: Vec::with_capacity(n),
        stddev: Vec::with_capacity(n),
        trial0: runs[0].fidelity.clone(),
        finals: runs.iter().map(|r| r.final_fidelity()).collect(),
        hygiene: runs
            .iter()
            .map(|r| r.hygiene)
            .reduce(Physicality::worst)
            .unwrap(),
        fingerprint_mismatch: runs[0].fingerprint_mismatch,
    };
    for k in 0..n {
        let column = runs.iter().map(|r| r.fidelity[k]);
        let mean = column.clone().sum::<f64>() / count;
        let var = column.clone().map(|f| (f - mean).powi(2)).sum::<f64>() / count;
        result.mean.push(mean);
        result
            .min
            .push(column.clone().fold(f64::INFINITY, f64::min));
        result.max.push(column.fold(f64::NEG_INFINITY, f64::max));
        result.stddev.push(var.sqrt());
    }
    Ok(result)
}
