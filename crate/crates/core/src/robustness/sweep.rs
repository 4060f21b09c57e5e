use std::io::Write;
use std::time::{Duration, Instant};

use crate::dynamics::IntegratorConfig;
use crate::error::{Error, Result};
use crate::models::{ModelFamily, Perturbation, PerturbationAxis};
use crate::schedule::fmt_f64;
use crate::state::Physicality;

use super::exec::Execution;
use super::replay::{replay_open_loop, OpenLoopPlan};

/// One sweep axis: `count` evenly spaced values from `lo` to `hi`, in the
/// parameter's native units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepAxis {
    pub axis: PerturbationAxis,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl SweepAxis {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::InvalidParameter(format!(
                "axis {} needs count >= 2, got {}",
                self.axis, self.count
            )));
        }
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "axis {} needs finite lo < hi, got [{}, {}]",
                self.axis, self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// The k-th grid value. A symmetric range with odd count hits 0 exactly.
    pub fn value(&self, k: usize) -> f64 {
        self.lo + (self.hi - self.lo) * k as f64 / (self.count - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.value(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub axis1: SweepAxis,
    pub axis2: SweepAxis,
}

impl SweepGrid {
    pub fn validate(&self, family: &ModelFamily) -> Result<()> {
        self.axis1.validate()?;
        self.axis2.validate()?;
        if self.axis1.axis == self.axis2.axis {
            return Err(Error::InvalidParameter(format!(
                "both sweep axes are `{}`",
                self.axis1.axis
            )));
        }
        for a in [self.axis1.axis, self.axis2.axis] {
            if !family.axes().contains(&a) {
                return Err(Error::InvalidParameter(format!(
                    "axis `{a}` is not a perturbation of this model (valid: {})",
                    family
                        .axes()
                        .iter()
                        .map(|a| a.name())
                        .collect::<Vec<_>>()
                        .join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axis1.count * self.axis2.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of the row-major index `i` (axis 1 varies slowest).
    pub fn point(&self, i: usize) -> (f64, f64) {
        let (r, c) = (i / self.axis2.count, i % self.axis2.count);
        (self.axis1.value(r), self.axis2.value(c))
    }
}

/// Final fidelity over a 2-D perturbation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: SweepGrid,
    /// Row-major: `values[i * axis2.count + j]`.
    pub values: Vec<f64>,
    pub seed: u64,
    pub schedule_fingerprint: String,
    pub config: IntegratorConfig,
    /// Plants whose fingerprint differs from the design model.
    pub mismatched_plants: usize,
    /// Worst physicality over every replay in the grid.
    pub hygiene: Physicality,
    pub wall_time: Duration,
}

impl SweepResult {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.axis2.count + j]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `axis1,axis2,fidelity` rows after `# ` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "# axis1: {}", self.grid.axis1.axis)?;
        writeln!(out, "# axis2: {}", self.grid.axis2.axis)?;
        writeln!(out, "axis1,axis2,fidelity")?;
        for (i, v) in self.values.iter().enumerate() {
            let (a, b) = self.grid.point(i);
            writeln!(out, "{},{},{}", fmt_f64(a), fmt_f64(b), fmt_f64(*v))?;
        }
        Ok(())
    }
}

/// Replays the schedule on every grid point of perturbed plants
/// (starting from `base`) and records the final fidelity.
pub fn sweep_uncertainty(
    plan: OpenLoopPlan<'_>,
    family: &ModelFamily,
    base: &Perturbation,
    grid: &SweepGrid,
    exec: Execution,
) -> Result<SweepResult> {
    grid.validate(family)?;
    let nominal = family.nominal()?;
    let started = Instant::now();
    let runs = exec.map(grid.len(), |i| {
        let (a, b) = grid.point(i);
        let mut d = base.clone();
        d.set(grid.axis1.axis, a)?;
        d.set(grid.axis2.axis, b)?;
        let (plant, rho0) = family.plant(&nominal.model, &d)?;
        let out = replay_open_loop(
            &plant,
            &rho0,
            plan.schedule,
            plan.target,
            d.noise(),
            0,
            plan.config,
        )?;
        Ok((out.final_fidelity(), out.fingerprint_mismatch, out.hygiene))
    })?;
    Ok(SweepResult {
        grid: *grid,
        values: runs.iter().map(|r| r.0).collect(),
        seed: base.noise().seed,
        schedule_fingerprint: plan.schedule.model_fingerprint().to_string(),
        config: *plan.config,
        mismatched_plants: runs.iter().filter(|r| r.1).count(),
        hygiene: runs.iter().map(|r| r.2).reduce(Physicality::worst).unwrap(),
        wall_time: started.elapsed(),
    })
}
