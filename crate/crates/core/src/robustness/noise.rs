//! Multiplicative control noise `fₙ(t)(1 + δₙ)`.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest admissible `|δ|`.
pub const MAX_DEVIATION: f64 = 10.0;

/// When δ is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// New δ every integration step, held over all four RK4 stages.
    #[default]
    PerStep,
    /// One δₙ per control for the whole run.
    PerRun,
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-step" => Ok(Self::PerStep),
            "per-run" => Ok(Self::PerRun),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise mode `{other}` (expected per-step|per-run)"
            ))),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerStep => "per-step",
            Self::PerRun => "per-run",
        })
    }
}

/// Uniform deviation range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRange {
    pub lo: f64,
    pub hi: f64,
}

impl NoiseRange {
    pub const ZERO: Self = Self { lo: 0.0, hi: 0.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let r = Self { lo, hi };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo <= self.hi) {
            return Err(Error::InvalidParameter(format!(
                "noise range needs lo <= hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if !(self.lo.abs() <= MAX_DEVIATION && self.hi.abs() <= MAX_DEVIATION) {
            return Err(Error::InvalidParameter(format!(
                "noise deviations must satisfy |δ| <= {MAX_DEVIATION}, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }
}

/// Noise model for a replay. An empty range list means no noise; a single
/// range applies to every control; otherwise there is one range per control.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseSpec {
    pub ranges: Vec<NoiseRange>,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// The same range on every control.
    pub fn uniform(lo: f64, hi: f64, mode: NoiseMode, seed: u64) -> Result<Self> {
        Ok(Self {
            ranges: vec![NoiseRange::new(lo, hi)?],
            mode,
            seed,
        })
    }

    pub fn validate(&self, controls: usize) -> Result<()> {
        if self.ranges.len() > 1 && self.ranges.len() != controls {
            return Err(Error::DimensionMismatch {
                expected: controls,
                found: self.ranges.len(),
            });
        }
        self.ranges.iter().try_for_each(NoiseRange::validate)
    }

    /// `true` when every draw would be zero.
    pub fn is_silent(&self) -> bool {
        self.ranges.iter().all(|r| *r == NoiseRange::ZERO)
    }

    /// Range per control after broadcasting.
    pub(crate) fn expanded(&self, controls: usize) -> Vec<NoiseRange> {
        match self.ranges.len() {
            0 => vec![NoiseRange::ZERO; controls],
            1 => vec![self.ranges[0]; controls],
            _ => self.ranges.clone(),
        }
    }

    pub(crate) fn sampler(&self, controls: usize, trial: u64) -> Result<NoiseSampler> {
        self.validate(controls)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        let draws = self
            .expanded(controls)
            .into_iter()
            .map(|r| {
                if r.is_degenerate() {
                    Ok(Draw::Fixed(r.lo))
                } else {
                    Uniform::new_inclusive(r.lo, r.hi)
                        .map(Draw::Uniform)
                        .map_err(|e| Error::InvalidParameter(format!("noise range: {e}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sampler = NoiseSampler {
            rng,
            draws,
            mode: self.mode,
            scales: vec![1.0; controls],
        };
        sampler.redraw();
        Ok(sampler)
    }
}

enum Draw {
    Fixed(f64),
    Uniform(Uniform<f64>),
}

/// Per-trial noise stream. Degenerate ranges never consume randomness, so
/// their output does not depend on the seed.
pub(crate) struct NoiseSampler {
    rng: ChaCha8Rng,
    draws: Vec<Draw>,
    mode: NoiseMode,
    scales: Vec<f64>,
}

impl NoiseSampler {
    fn redraw(&mut self) {
        for (scale, draw) in self.scales.iter_mut().zip(&self.draws) {
            let delta = match draw {
                Draw::Fixed(v) => *v,
                Draw::Uniform(u) => u.sample(&mut self.rng),
            };
            *scale = 1.0 + delta;
        }
    }

    /// Scale factors `1 + δₙ` for the step about to be taken.
    pub(crate) fn step(&mut self, step: usize) -> &[f64] {
        if self.mode == NoiseMode::PerStep && step > 0 {
            self.redraw();
        }
        &self.scales
    }
}
