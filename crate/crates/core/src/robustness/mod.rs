//! Open-loop replay of a designed schedule against perturbed plants and
//! noisy fields, with 2-D uncertainty sweeps and noise ensembles.
//!
//! Sweep points and ensemble trials are independent; they run on the rayon
//! pool under [`Execution::Parallel`] and are always aggregated in index
//! order, so results do not depend on scheduling.

mod ensemble;
mod exec;
mod noise;
mod replay;
mod sweep;

pub use ensemble::{noise_ensemble, EnsembleResult};
pub use exec::Execution;
pub use noise::{NoiseMode, NoiseRange, NoiseSpec, MAX_DEVIATION};
pub use replay::{replay_open_loop, OpenLoopPlan, ReplayOutcome};
pub use sweep::{sweep_uncertainty, SweepAxis, SweepGrid, SweepResult};
