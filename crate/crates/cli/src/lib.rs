//! Library side of `lyapctl`: config parsing, model loading and the
//! subcommands, shared by the binary and its tests.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod matrices;
pub mod run;
