//! Hermitian eigendecomposition by cyclic complex Jacobi rotations, and the
//! PSD matrix square root built on it.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

/// Input asymmetry accepted by [`hermitian_eig`].
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues below `-PSD_CLAMP` make [`psd_sqrt`] fail; smaller negative
/// residues are clamped to zero.
pub const PSD_CLAMP: f64 = 1e-9;

const MAX_SWEEPS: usize = 64;

/// Eigenvalues ascending; eigenvectors are the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        let n = self.vectors.dim();
        (0..n).map(|i| self.vectors[(i, k)]).collect()
    }

    /// `U diag(g(λ)) U†`.
    pub fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.vectors.dim();
        let u = &self.vectors;
        let weights: Vec<f64> = self.values.iter().map(|&l| g(l)).collect();
        ComplexMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| u[(i, k)] * u[(j, k)].conj() * weights[k])
                .sum()
        })
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Output is deterministic: eigenvalues ascending, each eigenvector's first
/// component with modulus above 1e-12 made real-positive, and eigenvectors of
/// (numerically) degenerate eigenvalues ordered by the index of that
/// component.
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<HermitianEigen> {
    let asymmetry = h.hermitian_asymmetry();
    if asymmetry > HERMITIAN_TOL || !h.is_finite() {
        return Err(Error::NotHermitian { asymmetry });
    }
    Ok(jacobi(&h.hermitian_part()))
}

/// Same as [`hermitian_eig`] but symmetrizes instead of validating. Used on
/// products such as `√ρ σ √ρ` that are Hermitian only up to rounding.
pub(crate) fn hermitian_eig_symmetrized(h: &ComplexMatrix) -> HermitianEigen {
    jacobi(&h.hermitian_part())
}

fn jacobi(h: &ComplexMatrix) -> HermitianEigen {
    let n = h.dim();
    let mut a = h.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q, scale);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let values: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();

    // phase convention first, so the degenerate tie-break can use it
    let mut lead = vec![0usize; n];
    for (k, lead_k) in lead.iter_mut().enumerate() {
        let first = (0..n).find(|&i| v[(i, k)].norm() > 1e-12).unwrap_or(0);
        *lead_k = first;
        let z = v[(first, k)];
        let phase = z.conj() / z.norm();
        for i in 0..n {
            v[(i, k)] *= phase;
        }
    }

    order.sort_by(|&x, &y| values[x].total_cmp(&values[y]));
    // stable reorder inside clusters of equal eigenvalues
    let mut start = 0;
    while start < n {
        let tol = 1e-10 * values[order[start]].abs().max(1.0);
        let mut end = start + 1;
        while end < n && (values[order[end]] - values[order[start]]).abs() <= tol {
            end += 1;
        }
        order[start..end].sort_by_key(|&k| (lead[k], k));
        start = end;
    }

    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, j| v[(i, order[j])]);
    HermitianEigen {
        values: sorted_values,
        vectors,
    }
}

fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize, scale: f64) {
    let n = a.dim();
    let apq = a[(p, q)];
    let r = apq.norm();
    if r <= 1e-300 || r <= 1e-18 * scale {
        return;
    }

    // unitary phase on index q makes a[p][q] real and positive
    let e = apq / r;
    for k in 0..n {
        a[(k, q)] *= e.conj();
        v[(k, q)] *= e.conj();
    }
    for k in 0..n {
        a[(q, k)] *= e;
    }

    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - akq * s;
        a[(k, q)] = akp * s + akq * c;
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * s;
        v[(k, q)] = vkp * s + vkq * c;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c - aqk * s;
        a[(q, k)] = apk * s + aqk * c;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(app - t * r, 0.0);
    a[(q, q)] = C64::new(aqq + t * r, 0.0);
}

/// Principal square root of a positive-semidefinite Hermitian matrix.
pub fn psd_sqrt(p: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(p)?;
    sqrt_from_eig(&eig)
}

pub(crate) fn sqrt_from_eig(eig: &HermitianEigen) -> Result<ComplexMatrix> {
    if let Some(&min) = eig.values.first() {
        if min < -PSD_CLAMP {
            return Err(Error::Unphysical(format!(
                "eigenvalue {min:.3e} is below the PSD tolerance -{PSD_CLAMP:e}"
            )));
        }
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::pauli;

    fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        // small LCG keeps the test free of RNG crates
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let raw = ComplexMatrix::from_fn(n, |_, _| C64::new(next(), next()));
        raw.hermitian_part()
    }

    #[test]
    fn diagonal_input() {
        let eig = hermitian_eig(&ComplexMatrix::diagonal(&[3.0, 1.0])).unwrap();
        assert_eq!(eig.values, vec![1.0, 3.0]);
        assert_eq!(eig.vector(0)[1], C64::new(1.0, 0.0));
    }

    #[test]
    fn pauli_x_spectrum() {
        let eig = hermitian_eig(&pauli::x()).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        // first component real-positive
        assert!(eig.vector(0)[0].re > 0.0 && eig.vector(0)[0].im.abs() < 1e-15);
    }

    #[test]
    fn random_reconstruction_and_unitarity() {
        for seed in 0..20 {
            for n in [2, 3, 4, 8] {
                let h = random_hermitian(n, seed);
                let eig = hermitian_eig(&h).unwrap();
                let residual = (&eig.reconstruct() - &h).frobenius_norm() / h.frobenius_norm();
                assert!(residual < 1e-10, "n={n} seed={seed} residual={residual}");
                let u = &eig.vectors;
                let gram = &u.adjoint() * u;
                assert!((&gram - &ComplexMatrix::identity(n)).max_abs() < 1e-10);
                let sum: f64 = eig.values.iter().sum();
                assert!((sum - h.trace().re).abs() <= 1e-10 * h.frobenius_norm().max(1.0));
                assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn deterministic_degenerate_order() {
        let h = ComplexMatrix::diagonal(&[2.0, 1.0, 2.0, 1.0]);
        let eig = hermitian_eig(&h).unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0, 2.0, 2.0]);
        let leads: Vec<usize> = (0..4)
            .map(|k| eig.vector(k).iter().position(|z| z.norm() > 0.5).unwrap())
            .collect();
        assert_eq!(leads, vec![1, 3, 0, 2]);
        let again = hermitian_eig(&h).unwrap();
        assert_eq!(eig.vectors, again.vectors);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        match hermitian_eig(&m) {
            Err(Error::NotHermitian { asymmetry }) => assert!((asymmetry - 1.0).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sqrt_examples() {
        let s = psd_sqrt(&ComplexMatrix::diagonal(&[4.0, 9.0])).unwrap();
        assert!((&s - &ComplexMatrix::diagonal(&[2.0, 3.0])).max_abs() < 1e-14);
        let id = ComplexMatrix::identity(3);
        assert!((&psd_sqrt(&id).unwrap() - &id).max_abs() < 1e-14);
        let proj = ComplexMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!((&psd_sqrt(&proj).unwrap() - &proj).max_abs() < 1e-12);
    }

    #[test]
    fn sqrt_clamps_small_negative_and_rejects_large() {
        let tiny = ComplexMatrix::diagonal(&[1.0, -5e-10]);
        let s = psd_sqrt(&tiny).unwrap();
        assert_eq!(s[(1, 1)], C64::new(0.0, 0.0));
        assert!(matches!(
            psd_sqrt(&ComplexMatrix::diagonal(&[1.0, -1e-6])),
            Err(Error::Unphysical(_))
        ));
    }

    #[test]
    fn sqrt_squares_back() {
        for seed in 0..10 {
            let a = random_hermitian(4, seed + 100);
            let p = &a * &a;
            let s = psd_sqrt(&p.hermitian_part()).unwrap();
            let err = (&(&s * &s) - &p).frobenius_norm() / (p.frobenius_norm() + 1.0);
            assert!(err < 1e-8);
            assert!(s.hermitian_asymmetry() < 1e-12);
        }
    }
}
