//! Complex matrices from CSV: one matrix row per line, entries as `re,im`
//! pairs in row-major order. Blank lines and `#` comments are skipped.
//!
//! ```text
//! # sigma_y
//! 0,0, 0,-1
//! 0,1, 0,0
//! ```

use std::path::Path;

use lyapunov_core::dynamics::{ControlSystemModel, LindbladChannel};
use lyapunov_core::matrix::ComplexMatrix;
use lyapunov_core::models::NominalSystem;
use lyapunov_core::state::DensityMatrix;
use lyapunov_core::{Error, Result};
use num_complex::Complex64;

use crate::config::{RawMatrices, RunConfig};

pub fn parse_matrix(text: &str) -> Result<ComplexMatrix> {
    let mut entries = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|e| Error::Format {
                    line: idx + 1,
                    message: format!("`{}`: {e}", c.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() % 2 != 0 {
            return Err(Error::Format {
                line: idx + 1,
                message: format!("{} values do not form re,im pairs", values.len()),
            });
        }
        let cols = values.len() / 2;
        if *width.get_or_insert(cols) != cols {
            return Err(Error::Format {
                line: idx + 1,
                message: format!("row has {cols} entries, expected {}", width.unwrap()),
            });
        }
        entries.extend(values.chunks(2).map(|p| Complex64::new(p[0], p[1])));
        rows += 1;
    }
    if width != Some(rows) {
        return Err(Error::Format {
            line: 0,
            message: format!("matrix is {rows}x{} rather than square", width.unwrap_or(0)),
        });
    }
    ComplexMatrix::from_row_major(entries)
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| match e {
        Error::Format { line, message } => Error::Format {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Builds the nominal system described by a raw-matrices model block.
pub fn load_raw_system(raw: &RawMatrices, config: &RunConfig) -> Result<NominalSystem> {
    let read = |p: &str| read_matrix(&config.resolve_input(p));
    let h0 = read(&raw.h0)?;
    let controls = raw
        .controls
        .iter()
        .map(|p| read(p))
        .collect::<Result<Vec<_>>>()?;
    let jumps = raw
        .jumps
        .iter()
        .map(|p| read(p))
        .collect::<Result<Vec<_>>>()?;
    let channel = if jumps.is_empty() {
        LindbladChannel::empty()
    } else {
        LindbladChannel::new(jumps, raw.rates.clone())?
    };
    let model = ControlSystemModel::new(h0, controls, channel, raw.drift_cancel_index)?;
    let rho0 = DensityMatrix::new(read(&raw.initial_state)?)?;
    let rho_d = DensityMatrix::new(read(&raw.target_state)?)?;
    Ok(NominalSystem { model, rho0, rho_d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_pairs_row_major() {
        let m = parse_matrix("# y\n0,0, 0,-1\n0,1, 0,0\n").unwrap();
        assert_eq!(m, lyapunov_core::matrix::pauli::y());
    }

    #[test]
    fn rejects_malformed_layouts() {
        assert!(matches!(
            parse_matrix("1,0,2\n"),
            Err(Error::Format { line: 1, .. })
        ));
        assert!(matches!(
            parse_matrix("1,0,0,0\n0,0\n"),
            Err(Error::Format { line: 2, .. })
        ));
        assert!(parse_matrix("1,0,0,0\n").is_err());
        assert!(matches!(
            parse_matrix("1,x\n"),
            Err(Error::Format { line: 1, .. })
        ));
    }
}
