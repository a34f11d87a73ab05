//! Spectrum classification and the symmetrization operator `eta` with
//! `eta H = H^dagger eta`.
//!
//! For a complex symmetric `H` the left eigenvector of `mu` is the conjugate
//! of the right one. With c-normalized right vectors `psi_n`
//! (`psi_n^T psi_n = 1`),
//!
//! `eta = sum_real conj(psi) psi^T + sum_pairs (conj(psi_+) psi_-^T + conj(psi_-) psi_+^T)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Relative tolerance used by [`classify`] when none is configured.
pub const DEFAULT_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetrizationError {
    #[error("state index {index} out of range for {len} states")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("state {index} appears more than once in the classification")]
    DuplicateIndex { index: usize },
    #[error("states {first} and {second} are paired but their energies are not conjugate")]
    NotConjugate { first: usize, second: usize },
    #[error("state {index} is classified real but has energy {energy}")]
    NotReal { index: usize, energy: Complex64 },
    #[error("state {index} has a vanishing c-norm (exceptional point)")]
    SelfOrthogonal { index: usize },
    #[error("state vectors have inconsistent lengths")]
    DimensionMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub real_indices: Vec<usize>,
    /// `(positive-imaginary member, negative-imaginary member)`.
    pub pair_indices: Vec<(usize, usize)>,
    pub unpaired_indices: Vec<usize>,
    pub tolerance: f64,
}

impl Classification {
    /// Label of state `index`: `real`, `pair` or `complex`.
    pub fn label(&self, index: usize) -> &'static str {
        if self.real_indices.contains(&index) {
            "real"
        } else if self.pair_indices.iter().any(|&(a, b)| a == index || b == index) {
            "pair"
        } else {
            "complex"
        }
    }

    /// Every eigenvalue is real or has its conjugate partner.
    pub fn is_balanced(&self) -> bool {
        self.unpaired_indices.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} real, {} pair(s), {} unpaired",
            self.real_indices.len(),
            self.pair_indices.len(),
            self.unpaired_indices.len()
        )
    }
}

/// Splits `energies` into real values, conjugate pairs and the rest.
///
/// A value is real when `|Im mu| <= tolerance * scale` with
/// `scale = max(1, max |mu|)`. The remaining values are paired greedily,
/// closest candidate pairs first, when `|mu_+ - conj(mu_-)| <= tolerance * scale`.
pub fn classify(energies: &[Complex64], tolerance: f64) -> Classification {
    let scale = energies.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let limit = tolerance * scale;
    let mut real_indices = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (i, z) in energies.iter().enumerate() {
        if z.im.abs() <= limit {
            real_indices.push(i);
        } else if z.im > 0.0 {
            upper.push(i);
        } else {
            lower.push(i);
        }
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for &i in &upper {
        for &j in &lower {
            let d = (energies[i] - energies[j].conj()).norm();
            if d <= limit {
                candidates.push((d, i, j));
            }
        }
    }
    // Order by distance, then by the values themselves, so that the result
    // does not depend on the input order.
    let key = |i: usize| (energies[i].re, energies[i].im);
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(key(a.1).0.total_cmp(&key(b.1).0))
            .then(key(a.1).1.total_cmp(&key(b.1).1))
            .then(key(a.2).0.total_cmp(&key(b.2).0))
            .then(key(a.2).1.total_cmp(&key(b.2).1))
    });
    let mut used = vec![false; energies.len()];
    let mut pair_indices = Vec::new();
    for (_, i, j) in candidates {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            pair_indices.push((i, j));
        }
    }
    pair_indices.sort_unstable();
    let mut unpaired_indices: Vec<usize> = upper.into_iter().chain(lower).filter(|&i| !used[i]).collect();
    unpaired_indices.sort_unstable();
    Classification {
        real_indices,
        pair_indices,
        unpaired_indices,
        tolerance,
    }
}

/// Matrix of `eta` in the representation of the supplied state vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaOperator {
    pub matrix: DMatrix<Complex64>,
    /// Number of states that do not enter the sums.
    pub kernel_rank: usize,
}

impl EtaOperator {
    /// `max |eta - eta^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Builds `eta` from eigenpairs `(mu_n, psi_n)` of a complex symmetric
/// matrix. Vectors are c-normalized here; unpaired states are left out.
pub fn build_eta(
    states: &[(Complex64, DVector<Complex64>)],
    classification: &Classification,
) -> Result<EtaOperator, SymmetrizationError> {
    let len = states.len();
    let dim = states.first().map(|s| s.1.len()).unwrap_or(0);
    if states.iter().any(|s| s.1.len() != dim) {
        return Err(SymmetrizationError::DimensionMismatch);
    }
    let mut seen = vec![false; len];
    let mut mark = |i: usize| -> Result<(), SymmetrizationError> {
        if i >= len {
            return Err(SymmetrizationError::IndexOutOfRange { index: i, len });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(SymmetrizationError::DuplicateIndex { index: i });
        }
        Ok(())
    };
    for &i in &classification.real_indices {
        mark(i)?;
    }
    for &(a, b) in &classification.pair_indices {
        mark(a)?;
        mark(b)?;
    }
    for &i in &classification.unpaired_indices {
        mark(i)?;
    }

    let scale = states.iter().map(|s| s.0.norm()).fold(1.0, f64::max);
    let limit = classification.tolerance * scale;
    let normalized = |i: usize| -> Result<DVector<Complex64>, SymmetrizationError> {
        let v = &states[i].1;
        let s = v.iter().map(|z| z * z).sum::<Complex64>();
        if s.norm() < 1e-12 * v.norm_squared() {
            return Err(SymmetrizationError::SelfOrthogonal { index: i });
        }
        Ok(v / s.sqrt())
    };

    let mut matrix = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    let mut entering = 0;
    for &i in &classification.real_indices {
        if states[i].0.im.abs() > limit {
            return Err(SymmetrizationError::NotReal {
                index: i,
                energy: states[i].0,
            });
        }
        let v = normalized(i)?;
        matrix += v.conjugate() * v.transpose();
        entering += 1;
    }
    for &(a, b) in &classification.pair_indices {
        if (states[a].0 - states[b].0.conj()).norm() > limit {
            return Err(SymmetrizationError::NotConjugate { first: a, second: b });
        }
        let (va, vb) = (normalized(a)?, normalized(b)?);
        matrix += va.conjugate() * vb.transpose() + vb.conjugate() * va.transpose();
        entering += 2;
    }
    Ok(EtaOperator {
        matrix,
        kernel_rank: len - entering,
    })
}

/// `|eta H - H^dagger eta|_F / (|eta|_F |H|_F)`, restricted to the range of
/// `eta` when it has a kernel.
pub fn quasi_hermiticity_residual(eta: &EtaOperator, hamiltonian: &DMatrix<Complex64>) -> f64 {
    let e = &eta.matrix;
    let mut r = e * hamiltonian - hamiltonian.adjoint() * e;
    if eta.kernel_rank > 0 {
        let p = range_projector(e);
        r = &p * r * &p;
    }
    let denom = e.norm() * hamiltonian.norm();
    if denom == 0.0 {
        0.0
    } else {
        r.norm() / denom
    }
}

/// Orthogonal projector onto the range of a Hermitian matrix.
fn range_projector(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let largest = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut p = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > 1e-10 * largest {
            let u = eig.eigenvectors.column(k);
            p += u * u.adjoint();
        }
    }
    p
}

/// Eigenpairs of a small complex symmetric matrix; vectors are obtained by
/// inverse iteration on each eigenvalue.
pub fn eigenpairs(matrix: &DMatrix<Complex64>) -> Vec<(Complex64, DVector<Complex64>)> {
    let n = matrix.nrows();
    let values = crate::matrix_model::dense_eigenvalues(matrix);
    let scale = matrix.norm().max(1.0);
    values
        .into_iter()
        .map(|mu| {
            let shift = mu + Complex64::new(1e-13 * scale, 1e-13 * scale);
            let a = matrix - DMatrix::from_diagonal_element(n, n, shift);
            let lu = a.lu();
            let mut v = DVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64));
            for _ in 0..3 {
                if let Some(next) = lu.solve(&v) {
                    let norm = next.norm();
                    if norm > 0.0 && norm.is_finite() {
                        v = next / Complex64::new(norm, 0.0);
                    }
                }
            }
            (mu, v)
        })
        .collect()
}
