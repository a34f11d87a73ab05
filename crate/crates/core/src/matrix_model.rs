//! Reduction of the continuous problem to an `N x N` tight-binding model.
//!
//! Each well contributes the ground state of its real single-well potential.
//! With the overlap matrix `K` and Hamiltonian matrix `H` in that basis,
//! symmetric orthogonalization `X = U D^{-1/2} U^T` (from `K = U D U^T`)
//! gives `H_eff = X H X`, whose diagonal carries the on-site energies
//! `epsilon_n + i gamma_n` and whose first off-diagonal carries `-J`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::Grid;
use crate::grid_solver::{solve_lowest, SolverError, SolverOptions, Spectrum};
use crate::potential::{MultiWellPotential, Param, PotentialError};

/// Largest model handled by [`dense_eigenvalues`].
pub const MAX_DENSE: usize = 16;

/// Basis functions larger than this at the domain edge are reported as
/// insufficiently localized; overlap integrals then err at about its square.
pub const LOCALIZATION_LIMIT: f64 = 1e-4;

/// Finite-difference step used for parameter sensitivities.
pub const SENSITIVITY_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixModelError {
    #[error("well {well} does not bind a state (ground energy {energy} >= 0)")]
    Unbound { well: usize, energy: f64 },
    #[error("overlap matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("basis and potential sizes differ ({basis} vs {potential})")]
    SizeMismatch { basis: usize, potential: usize },
    #[error("state index {index} out of range for {len} states")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Ground states of the real single wells, sampled on the interior points.
#[derive(Debug, Clone)]
pub struct BasisSet {
    functions: Vec<Vec<f64>>,
    ground_energies: Vec<f64>,
    grid: Grid,
}

impl BasisSet {
    pub fn functions(&self) -> &[Vec<f64>] {
        &self.functions
    }

    pub fn ground_energies(&self) -> &[f64] {
        &self.ground_energies
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Largest basis-function magnitude at the first or last interior point.
    pub fn boundary_amplitude(&self) -> f64 {
        self.functions
            .iter()
            .map(|f| f[0].abs().max(f[f.len() - 1].abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_localized(&self) -> bool {
        self.boundary_amplitude() < LOCALIZATION_LIMIT
    }
}

/// `H_mn = int phi_m' phi_n' + int phi_m V phi_n` and `K_mn = int phi_m phi_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrices {
    pub h: DMatrix<Complex64>,
    pub k: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveModel {
    pub h_eff: DMatrix<Complex64>,
    /// Symmetric orthogonalization matrix.
    pub x: DMatrix<f64>,
    pub epsilon: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `-mean Re h_eff[n, n+1]`; `None` for a single well.
    pub j: Option<f64>,
    /// Largest deviation of `h_eff` from the ideal tridiagonal form with a
    /// single real coupling `-J`.
    pub offdiag_residual: f64,
    /// `max |X K X - 1|`.
    pub lowdin_error: f64,
}

impl EffectiveModel {
    pub fn len(&self) -> usize {
        self.epsilon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilon.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        dense_eigenvalues(&self.h_eff)
    }
}

/// How the tunneling rate entering the two-well criterion is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum JMode {
    /// `J` of the configuration itself.
    Recomputed,
    /// `J` of the Hermitian reference configuration in which every well has
    /// the depth of the first one.
    #[default]
    Frozen,
    /// A fixed value.
    Fixed(f64),
}

pub fn build_basis(potential: &MultiWellPotential, grid: &Grid) -> Result<BasisSet, MatrixModelError> {
    let opts = SolverOptions {
        extra_states: 1,
        ..SolverOptions::default()
    };
    let mut functions = Vec::with_capacity(potential.len());
    let mut ground_energies = Vec::with_capacity(potential.len());
    for n in 0..potential.len() {
        let single = potential.single_well(n)?;
        let spectrum = solve_lowest(&single, grid, 1, &opts)?;
        let pair = &spectrum.pairs()[0];
        if pair.energy.re >= 0.0 {
            return Err(MatrixModelError::Unbound {
                well: n,
                energy: pair.energy.re,
            });
        }
        functions.push(pair.wavefunction.iter().map(|z| z.re).collect());
        ground_energies.push(pair.energy.re);
    }
    let basis = BasisSet {
        functions,
        ground_energies,
        grid: *grid,
    };
    if !basis.is_localized() {
        static WARNED: std::sync::Once = std::sync::Once::new();
        let amplitude = basis.boundary_amplitude();
        let mut first = false;
        WARNED.call_once(|| first = true);
        if first {
            log::warn!("basis functions reach {amplitude:.2e} at the domain edge; enlarge the grid for accurate model constants");
        } else {
            log::debug!("basis functions reach {amplitude:.2e} at the domain edge");
        }
    }
    Ok(basis)
}

/// Matrix elements by the trapezoid rule. Derivatives are differences at the
/// cell midpoints, which makes the kinetic form identical to the one of the
/// discretized operator (so `H_11` of a single well is its ground energy).
pub fn assemble(basis: &BasisSet, potential: &MultiWellPotential) -> Result<OverlapMatrices, MatrixModelError> {
    if basis.len() != potential.len() {
        return Err(MatrixModelError::SizeMismatch {
            basis: basis.len(),
            potential: potential.len(),
        });
    }
    let grid = basis.grid;
    let v: Vec<Complex64> = grid.interior().map(|x| potential.evaluate(x)).collect();
    Ok(assemble_with(basis, &v))
}

fn assemble_with(basis: &BasisSet, v: &[Complex64]) -> OverlapMatrices {
    let n = basis.len();
    let h_step = basis.grid.spacing();
    let f = &basis.functions;
    let mut h = potential_matrix(basis, v);
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let overlap = h_step * f[a].iter().zip(&f[b]).map(|(p, q)| p * q).sum::<f64>();
            k[(a, b)] = overlap;
            k[(b, a)] = overlap;
            let kinetic = kinetic_form(&f[a], &f[b], h_step);
            h[(a, b)] += kinetic;
            if a != b {
                h[(b, a)] += kinetic;
            }
        }
    }
    OverlapMatrices { h, k }
}

/// `int phi_m v phi_n dx`.
fn potential_matrix<T>(basis: &BasisSet, v: &[T]) -> DMatrix<T>
where
    T: nalgebra::Scalar + Copy + std::ops::Mul<f64, Output = T> + std::iter::Sum,
{
    let n = basis.len();
    let grid = basis.grid;
    let f = &basis.functions;
    DMatrix::from_fn(n, n, |a, b| {
        grid.integrate(f[a].iter().zip(&f[b]).zip(v).map(|((p, q), vj)| *vj * (p * q)))
    })
}

fn kinetic_form(p: &[f64], q: &[f64], h: f64) -> f64 {
    // Samples vanish at both ends of the grid.
    let at = |f: &[f64], i: isize| -> f64 {
        if i < 0 || i as usize >= f.len() {
            0.0
        } else {
            f[i as usize]
        }
    };
    let n = p.len() as isize;
    let mut acc = 0.0;
    for i in -1..n {
        let dp = at(p, i + 1) - at(p, i);
        let dq = at(q, i + 1) - at(q, i);
        acc += dp * dq;
    }
    acc / h
}

pub fn orthogonalize(overlaps: &OverlapMatrices) -> Result<EffectiveModel, MatrixModelError> {
    let n = overlaps.k.nrows();
    let eig = SymmetricEigen::new(overlaps.k.clone());
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eigenvalue > 1e-12) {
        return Err(MatrixModelError::NotPositiveDefinite { min_eigenvalue });
    }
    let d_inv_sqrt = DVector::from_iterator(n, eig.eigenvalues.iter().map(|d| d.sqrt().recip()));
    let u = &eig.eigenvectors;
    let x = u * DMatrix::from_diagonal(&d_inv_sqrt) * u.transpose();
    let x = (&x + x.transpose()) * 0.5;

    let xkx = &x * &overlaps.k * &x;
    let lowdin_error = (xkx - DMatrix::<f64>::identity(n, n)).amax();

    let xc = x.map(|v| Complex64::new(v, 0.0));
    let h_eff = &xc * &overlaps.h * &xc;
    Ok(effective_from(h_eff, x, lowdin_error))
}

fn effective_from(h_eff: DMatrix<Complex64>, x: DMatrix<f64>, lowdin_error: f64) -> EffectiveModel {
    let n = h_eff.nrows();
    let epsilon: Vec<f64> = (0..n).map(|i| h_eff[(i, i)].re).collect();
    let gamma: Vec<f64> = (0..n).map(|i| h_eff[(i, i)].im).collect();
    let j = (n > 1).then(|| -(0..n - 1).map(|i| h_eff[(i, i + 1)].re).sum::<f64>() / (n - 1) as f64);
    let mut offdiag_residual: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let z = h_eff[(r, c)];
            let dev = match r.abs_diff(c) {
                0 => 0.0,
                1 => z.im.abs().max((z.re + j.unwrap_or(0.0)).abs()),
                _ => z.norm(),
            };
            offdiag_residual = offdiag_residual.max(dev);
        }
    }
    EffectiveModel {
        h_eff,
        x,
        epsilon,
        gamma,
        j,
        offdiag_residual,
        lowdin_error,
    }
}

/// Basis, matrix elements and effective model of one configuration.
pub fn build_model(
    potential: &MultiWellPotential,
    grid: &Grid,
) -> Result<(BasisSet, OverlapMatrices, EffectiveModel), MatrixModelError> {
    let basis = build_basis(potential, grid)?;
    let overlaps = assemble(&basis, potential)?;
    let model = orthogonalize(&overlaps)?;
    Ok((basis, overlaps, model))
}

/// `H_eff` as an affine function of the gain-loss parameters:
/// `H_eff(Gamma) = base + i sum_n Gamma_n per_well[n]`. Exact, since the
/// basis does not depend on `Gamma`.
#[derive(Debug, Clone)]
pub struct GainLossResponse {
    pub base: DMatrix<Complex64>,
    pub per_well: Vec<DMatrix<f64>>,
}

impl GainLossResponse {
    pub fn new(basis: &BasisSet, potential: &MultiWellPotential) -> Result<Self, MatrixModelError> {
        let real = potential.real_part();
        let overlaps = assemble(basis, &real)?;
        let model = orthogonalize(&overlaps)?;
        let grid = basis.grid;
        let per_well = potential
            .wells()
            .iter()
            .map(|w| {
                let g: Vec<f64> = grid.interior().map(|x| w.profile(x)).collect();
                &model.x * potential_matrix(basis, &g) * &model.x
            })
            .collect();
        Ok(Self {
            base: model.h_eff,
            per_well,
        })
    }

    pub fn at(&self, gain_loss: &[f64]) -> DMatrix<Complex64> {
        let mut out = self.base.clone();
        for (g, m) in gain_loss.iter().zip(&self.per_well) {
            out += m.map(|v| Complex64::new(0.0, g * v));
        }
        out
    }
}

/// Diagonal sensitivities `d epsilon_n / d V_n` and `d gamma_n / d Gamma_n`
/// by centered differences.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivities {
    pub d_epsilon_d_depth: Vec<f64>,
    pub d_gamma_d_gain_loss: Vec<f64>,
}

pub fn sensitivities(potential: &MultiWellPotential, grid: &Grid) -> Result<Sensitivities, MatrixModelError> {
    let n = potential.len();
    let model_at = |p: &MultiWellPotential| -> Result<EffectiveModel, MatrixModelError> {
        Ok(build_model(p, grid)?.2)
    };
    let mut d_eps = Vec::with_capacity(n);
    let mut d_gam = Vec::with_capacity(n);
    let basis = build_basis(potential, grid)?;
    for i in 0..n {
        let v = potential.param(Param::Depth(i))?;
        let plus = model_at(&potential.with_param(Param::Depth(i), v + SENSITIVITY_STEP)?)?;
        let minus = model_at(&potential.with_param(Param::Depth(i), v - SENSITIVITY_STEP)?)?;
        d_eps.push((plus.epsilon[i] - minus.epsilon[i]) / (2.0 * SENSITIVITY_STEP));

        // The basis is independent of the gain-loss parameters.
        let g = potential.param(Param::GainLoss(i))?;
        let eval = |value: f64| -> Result<f64, MatrixModelError> {
            let p = potential.with_param(Param::GainLoss(i), value)?;
            Ok(orthogonalize(&assemble(&basis, &p)?)?.gamma[i])
        };
        d_gam.push((eval(g + SENSITIVITY_STEP)? - eval(g - SENSITIVITY_STEP)?) / (2.0 * SENSITIVITY_STEP));
    }
    Ok(Sensitivities {
        d_epsilon_d_depth: d_eps,
        d_gamma_d_gain_loss: d_gam,
    })
}

/// `J` according to `mode` for the configuration `potential`.
pub fn coupling(potential: &MultiWellPotential, grid: &Grid, mode: JMode) -> Result<Option<f64>, MatrixModelError> {
    match mode {
        JMode::Fixed(j) => Ok(Some(j)),
        JMode::Recomputed => Ok(build_model(&potential.real_part(), grid)?.2.j),
        JMode::Frozen => {
            let depth = potential.wells()[0].depth;
            let mut reference = potential.real_part();
            for i in 1..potential.len() {
                reference = reference.with_param(Param::Depth(i), depth)?;
            }
            Ok(build_model(&reference, grid)?.2.j)
        }
    }
}

/// All eigenvalues of a small complex matrix, ascending by real part (ties
/// by imaginary part).
///
/// Tridiagonal input goes through its characteristic polynomial (three-term
/// recurrence) and simultaneous Aberth iteration; anything else, or a
/// recurrence that fails to converge, through the complex Schur form.
pub fn dense_eigenvalues(matrix: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "matrix must be square");
    assert!(n <= MAX_DENSE, "dense eigenvalues limited to {MAX_DENSE}x{MAX_DENSE}");
    if n == 0 {
        return Vec::new();
    }
    let tridiagonal = (0..n).all(|r| (0..n).all(|c| r.abs_diff(c) <= 1 || matrix[(r, c)] == Complex64::new(0.0, 0.0)));
    let mut values = if tridiagonal {
        aberth_tridiagonal(matrix).unwrap_or_else(|| schur_eigenvalues(matrix))
    } else {
        schur_eigenvalues(matrix)
    };
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    values
}

fn schur_eigenvalues(matrix: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (_, t) = nalgebra::linalg::Schur::new(matrix.clone()).unpack();
    (0..matrix.nrows()).map(|i| t[(i, i)]).collect()
}

/// `(det(T - z), d/dz det(T - z))` by the three-term recurrence.
fn char_poly(a: &[Complex64], bc: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let (mut p_prev, mut p) = (one, a[0] - z);
    let (mut d_prev, mut d) = (zero, -one);
    for k in 1..a.len() {
        let p_next = (a[k] - z) * p - bc[k - 1] * p_prev;
        let d_next = -p + (a[k] - z) * d - bc[k - 1] * d_prev;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

fn aberth_tridiagonal(matrix: &DMatrix<Complex64>) -> Option<Vec<Complex64>> {
    let n = matrix.nrows();
    let a: Vec<Complex64> = (0..n).map(|i| matrix[(i, i)]).collect();
    let bc: Vec<Complex64> = (0..n - 1).map(|i| matrix[(i, i + 1)] * matrix[(i + 1, i)]).collect();
    if n == 1 {
        return Some(a);
    }
    let center = a.iter().sum::<Complex64>() / n as f64;
    let radius = a.iter().map(|ai| (ai - center).norm()).fold(0.0, f64::max)
        + 2.0 * bc.iter().map(|v| v.norm().sqrt()).fold(0.0, f64::max)
        + 1e-3;
    let scale = center.norm() + radius;
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| center + Complex64::from_polar(radius, 0.4 + std::f64::consts::TAU * k as f64 / n as f64))
        .collect();
    for _ in 0..500 {
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let (p, d) = char_poly(&a, &bc, z[k]);
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = p / d;
            let repulsion: Complex64 = (0..n).filter(|&j| j != k).map(|j| (z[k] - z[j]).inv()).sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !w.re.is_finite() || !w.im.is_finite() {
                return None;
            }
            z[k] -= w;
            max_step = max_step.max(w.norm());
        }
        if max_step <= 1e-15 * scale {
            // Newton polish.
            for zk in z.iter_mut() {
                for _ in 0..2 {
                    let (p, d) = char_poly(&a, &bc, *zk);
                    if d.norm() > 0.0 {
                        *zk -= p / d;
                    }
                }
            }
            return Some(z);
        }
    }
    None
}

/// Energy difference `epsilon_2 - epsilon_1` at which a two-well model with
/// gain-loss terms `gamma1`, `gamma2` and coupling `j` has one real
/// eigenvalue, as `(+, -)`. `None` unless the gains have opposite signs and
/// `|gamma1 gamma2| <= j^2`.
pub fn two_well_epsilon(gamma1: f64, gamma2: f64, j: f64) -> Option<(f64, f64)> {
    let prod = gamma1 * gamma2;
    if !(prod < 0.0) || -prod > j * j {
        return None;
    }
    let eps = (gamma1 + gamma2) * (-(prod + j * j) / prod).sqrt();
    Some((eps, -eps))
}

/// Eigenvalue order condition for a balanced three-well model.
pub fn three_well_admissible(epsilon: [f64; 3], gamma: [f64; 3]) -> bool {
    let increasing = epsilon[0] < epsilon[1] && epsilon[1] < epsilon[2];
    let decreasing = epsilon[0] > epsilon[1] && epsilon[1] > epsilon[2];
    (increasing && gamma[0] > 0.0 && gamma[2] > 0.0 && gamma[1] < 0.0)
        || (decreasing && gamma[0] < 0.0 && gamma[2] < 0.0 && gamma[1] > 0.0)
}

/// Non-trivial gain-loss vectors balancing the ideal three-well model with
/// on-site energies `epsilon` and uniform coupling `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BalancedGamma {
    /// `(gamma, -gamma)`: the two real solutions.
    Real([f64; 3], [f64; 3]),
    /// The solution pair is purely imaginary; `t2 < 0` is its squared scale.
    Imaginary { t2: f64 },
    /// Equal on-site energies or a vanishing cubic coefficient.
    Degenerate,
}

/// Solves `Im e_k(eigenvalues) = 0` (k = 1, 2, 3) for the tridiagonal model
/// `diag(epsilon + i gamma) - j (nearest neighbours)`.
///
/// The two linear conditions force `gamma = t w` with
/// `w = (1, 1, 1) x (S - epsilon)`, `S = sum epsilon`; the cubic one then
/// fixes `t^2`.
pub fn balanced_gamma_closed_form(epsilon: [f64; 3], j: f64) -> BalancedGamma {
    let s: f64 = epsilon.iter().sum();
    let r = [s - epsilon[0], s - epsilon[1], s - epsilon[2]];
    let w = [r[2] - r[1], r[0] - r[2], r[1] - r[0]];
    let [e1, e2, e3] = epsilon;
    let a = w[0] * e2 * e3 + w[1] * e1 * e3 + w[2] * e1 * e2;
    let cubic = w[0] * w[1] * w[2];
    let scale = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 || cubic.abs() <= 1e-14 * scale.powi(3) {
        return BalancedGamma::Degenerate;
    }
    let t2 = (a - j * j * (w[0] + w[2])) / cubic;
    if t2 < 0.0 {
        return BalancedGamma::Imaginary { t2 };
    }
    let t = t2.sqrt();
    let g = [t * w[0], t * w[1], t * w[2]];
    BalancedGamma::Real(g, [-g[0], -g[1], -g[2]])
}

/// Norm of the ansatz residual `xi = H c - E K c` for the exact state `l`,
/// with `c` the L2 least-squares projection of that state onto the basis.
pub fn approximation_residual(
    spectrum: &Spectrum,
    basis: &BasisSet,
    overlaps: &OverlapMatrices,
    l: usize,
) -> Result<f64, MatrixModelError> {
    let pairs = spectrum.pairs();
    let pair = pairs.get(l).ok_or(MatrixModelError::IndexOutOfRange {
        index: l,
        len: pairs.len(),
    })?;
    let n = basis.len();
    let grid = basis.grid;
    let b = DVector::from_iterator(
        n,
        basis
            .functions
            .iter()
            .map(|phi| grid.integrate(phi.iter().zip(&pair.wavefunction).map(|(p, psi)| psi * *p))),
    );
    let kc = overlaps.k.map(|v| Complex64::new(v, 0.0));
    let c = kc
        .clone()
        .lu()
        .solve(&b)
        .ok_or(MatrixModelError::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    let xi = &overlaps.h * &c - (kc * &c) * pair.energy;
    Ok(xi.norm())
}
