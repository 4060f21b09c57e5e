//! Physical states and the Uhlmann fidelity between them.

use num_complex::Complex64 as C64;

use crate::eigen::{hermitian_eig_symmetrized, sqrt_from_eig};
use crate::error::{Error, Result};
use crate::matrix::{trace_product_unchecked, ComplexMatrix};

/// Normalization tolerance for pure states at construction.
pub const NORM_TOL: f64 = 1e-10;
/// Loose tolerances applied to density matrices, including integrated ones.
pub const HERMITIAN_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-6;
pub const MIN_EIGENVALUE: f64 = -1e-6;

/// Purity deviation below which a density matrix is treated as pure by
/// [`fidelity`].
const PURE_TOL: f64 = 1e-12;

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let norm = norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    /// Computational basis vector `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[k] = C64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// How far a matrix is from being a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Physicality {
    pub trace_drift: f64,
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
}

impl Physicality {
    pub fn of(m: &ComplexMatrix) -> Self {
        let eig = hermitian_eig_symmetrized(m);
        Self {
            trace_drift: (m.trace() - C64::new(1.0, 0.0)).norm(),
            asymmetry: m.hermitian_asymmetry(),
            min_eigenvalue: eig.values.first().copied().unwrap_or(0.0),
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.asymmetry <= HERMITIAN_TOL) {
            return Err(Error::NotHermitian {
                asymmetry: self.asymmetry,
            });
        }
        if !(self.trace_drift <= TRACE_TOL) {
            return Err(Error::Unphysical(format!(
                "trace deviates from 1 by {:.3e}",
                self.trace_drift
            )));
        }
        if !(self.min_eigenvalue >= MIN_EIGENVALUE) {
            return Err(Error::Unphysical(format!(
                "minimum eigenvalue {:.3e}",
                self.min_eigenvalue
            )));
        }
        Ok(())
    }

    /// Worst-case combination of two reports.
    pub fn worst(self, other: Self) -> Self {
        Self {
            trace_drift: self.trace_drift.max(other.trace_drift),
            asymmetry: self.asymmetry.max(other.asymmetry),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix (within the loose
/// trajectory tolerances).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::Unphysical("non-finite entries".into()));
        }
        Physicality::of(&matrix).check()?;
        Ok(Self { matrix })
    }

    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn purity(&self) -> f64 {
        trace_product_unchecked(&self.matrix, &self.matrix).re
    }

    pub fn physicality(&self) -> Physicality {
        Physicality::of(&self.matrix)
    }
}

/// `|ψ⟩⟨ψ|`.
pub fn project(psi: &PureState) -> Result<DensityMatrix> {
    let n = psi.norm();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm: n });
    }
    let a = psi.amplitudes();
    Ok(DensityMatrix::new_unchecked(ComplexMatrix::outer(a, a)))
}

/// Uhlmann fidelity `Tr √(√ρ_D ρ_R √ρ_D)`.
///
/// When either argument is pure the closed form `√Tr(ρ_D ρ_R)` is used.
pub fn fidelity(target: &DensityMatrix, actual: &DensityMatrix) -> Result<f64> {
    target.matrix.same_dim(&actual.matrix)?;
    if (target.purity() - 1.0).abs() < PURE_TOL || (actual.purity() - 1.0).abs() < PURE_TOL {
        let overlap = trace_product_unchecked(&target.matrix, &actual.matrix).re;
        return Ok(overlap.max(0.0).sqrt());
    }
    fidelity_general(target, actual)
}

/// Fidelity through the matrix square root, with no pure-state shortcut.
pub fn fidelity_general(target: &DensityMatrix, actual: &DensityMatrix) -> Result<f64> {
    target.matrix.same_dim(&actual.matrix)?;
    let root = sqrt_from_eig(&hermitian_eig_symmetrized(&target.matrix))?;
    let inner = &(&root * &actual.matrix) * &root;
    let eig = hermitian_eig_symmetrized(&inner);
    Ok(eig.values.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn population(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: psi.dim(),
        });
    }
    let n = psi.norm();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm: n });
    }
    let z = rho.matrix.sandwich(psi.amplitudes(), psi.amplitudes());
    debug_assert!(z.im.abs() < 1e-8, "population has imaginary part {}", z.im);
    Ok(z.re)
}
