//! Lyapunov-feedback design of open-loop quantum control schedules, and the
//! robustness analysis of those schedules under Hamiltonian, initial-state,
//! and control-field uncertainty.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod matrix;
pub mod models;
pub mod robustness;
pub mod schedule;
pub mod state;

pub use error::{Error, Result};
