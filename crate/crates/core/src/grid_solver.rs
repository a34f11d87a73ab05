//! Lowest eigenpairs of the discretized non-Hermitian Hamiltonian
//! `H = -d^2/dx^2 + V(x)`.
//!
//! The operator is discretized with second-order central differences and
//! Dirichlet ends, giving a complex symmetric tridiagonal matrix. Its
//! eigenpairs are found in two stages:
//!
//! 1. the Hermitian problem for `Re V` is solved exactly (Sturm bisection for
//!    the eigenvalues, inverse iteration for the vectors);
//! 2. the imaginary part is switched on along the homotopy
//!    `V_t = Re V + i t Im V`, each state being followed with shifted inverse
//!    iteration (Rayleigh quotient shifts from the bilinear c-product) and
//!    deflated against the states already found at that `t`.
//!
//! For a complex symmetric matrix the left eigenvector is the transpose of
//! the right one, so only right eigenvectors are stored.

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::Grid;
use crate::potential::MultiWellPotential;
use crate::tridiag::{lowest_eigenvalues, Tridiagonal};

/// Below this relative c-norm `|psi^T psi| / |psi|^2` a state is treated as
/// sitting at an exceptional point.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(
        "inverse iteration for state {state} did not converge after {iterations} iterations \
         (shift {shift}, residual {residual:.3e})"
    )]
    NoConvergence {
        state: usize,
        shift: Complex64,
        iterations: usize,
        residual: f64,
    },
    #[error("eigenvalue continuation stalled at t = {t:.6} (step {step:.2e})")]
    ContinuationStalled { t: f64, step: f64 },
    #[error("requested {requested} states but the grid only has {available} unknowns")]
    TooManyStates { requested: usize, available: usize },
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual `|H psi - mu psi| / |psi|` required of each pair.
    pub tol: f64,
    /// Inverse-iteration sweeps allowed per state and continuation step.
    pub max_iter: usize,
    /// States followed beyond the requested ones, so that reordering near
    /// the top of the window does not lose a state.
    pub extra_states: usize,
    /// Smallest continuation step, as a fraction of the homotopy.
    pub min_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 60,
            extra_states: 2,
            min_step: 1.0 / 4096.0,
        }
    }
}

/// One eigenpair on the interior grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub energy: Complex64,
    /// Samples at the interior grid points, L2-normalized with the trapezoid
    /// rule. The largest-modulus sample is real and positive.
    pub wavefunction: Vec<Complex64>,
    /// Relative residual `|H psi - mu psi| / |psi|` at convergence.
    pub residual: f64,
}

impl EigenPair {
    /// Bilinear self-product `int psi^2 dx`.
    pub fn c_norm(&self, grid: &Grid) -> Complex64 {
        grid.integrate(self.wavefunction.iter().map(|z| z * z))
    }

    pub fn l2_norm(&self, grid: &Grid) -> f64 {
        grid.integrate(self.wavefunction.iter().map(|z| z.norm_sqr())).sqrt()
    }

    /// Copy scaled so that `int psi^2 dx = 1`; the sign is chosen so that the
    /// first sample of non-negligible size has a positive real part.
    /// `None` at an exceptional point, where the c-norm vanishes.
    pub fn c_normalized(&self, grid: &Grid) -> Option<Vec<Complex64>> {
        let l2 = self.l2_norm(grid);
        let s = self.c_norm(grid);
        if s.norm() < DEGENERACY_THRESHOLD * l2 * l2 {
            return None;
        }
        let scale = s.sqrt().inv();
        let mut out: Vec<Complex64> = self.wavefunction.iter().map(|z| z * scale).collect();
        let peak = out.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if let Some(first) = out.iter().find(|z| z.norm() > 1e-6 * peak) {
            if first.re < 0.0 || (first.re == 0.0 && first.im < 0.0) {
                out.iter_mut().for_each(|z| *z = -*z);
            }
        }
        Some(out)
    }
}

/// Lowest eigenpairs of one potential on one grid, ascending by `Re mu`
/// (ties by `Im mu`).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pairs: Vec<EigenPair>,
    grid: Grid,
    potential: MultiWellPotential,
    degenerate: Vec<bool>,
    unbound: Vec<bool>,
    // Every followed state, including the extra ones; seeds warm starts.
    tracked: Vec<EigenPair>,
}

impl Spectrum {
    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn energies(&self) -> Vec<Complex64> {
        self.pairs.iter().map(|p| p.energy).collect()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &MultiWellPotential {
        &self.potential
    }

    /// States whose c-norm nearly vanishes (close to an exceptional point).
    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    /// States at or above the continuum threshold `min(0, Re V(ends))`, i.e.
    /// discretized scattering states rather than bound states.
    pub fn unbound(&self) -> &[bool] {
        &self.unbound
    }

    pub fn max_residual(&self) -> f64 {
        self.pairs.iter().map(|p| p.residual).fold(0.0, f64::max)
    }
}

/// Second-order finite-difference matrix of `-d^2/dx^2 + V` on the interior
/// points with `psi(x_min) = psi(x_max) = 0`.
pub fn discretize(potential: &MultiWellPotential, grid: &Grid) -> Tridiagonal {
    let v: Vec<Complex64> = grid.interior().map(|x| potential.evaluate(x)).collect();
    operator(&v, grid)
}

fn operator(v: &[Complex64], grid: &Grid) -> Tridiagonal {
    let h = grid.spacing();
    let off = Complex64::new(-1.0 / (h * h), 0.0);
    let n = v.len();
    let diag = v.iter().map(|vj| vj + 2.0 / (h * h)).collect();
    Tridiagonal::new(vec![off; n - 1], diag, vec![off; n - 1])
}

/// The `m` eigenpairs with smallest `Re mu`.
pub fn solve_lowest(
    potential: &MultiWellPotential,
    grid: &Grid,
    m: usize,
    options: &SolverOptions,
) -> Result<Spectrum, SolverError> {
    check_request(grid, m, options)?;
    let k = (m + options.extra_states).min(grid.interior_len());
    let real = potential.real_part();
    let start = hermitian_states(&real, grid, k, options)?;
    if potential.is_real() {
        return Ok(assemble(potential.clone(), *grid, m, start));
    }
    let v0 = samples(&real, grid);
    let v1 = samples(potential, grid);
    let tracked = continue_states(grid, &v0, &v1, start, options)?;
    Ok(assemble(potential.clone(), *grid, m, tracked))
}

/// Like [`solve_lowest`] but continues the states of `previous` (same grid,
/// nearby potential) instead of starting from the Hermitian problem. Falls
/// back to a cold start if the continuation fails.
pub fn solve_lowest_from(
    previous: &Spectrum,
    potential: &MultiWellPotential,
    m: usize,
    options: &SolverOptions,
) -> Result<Spectrum, SolverError> {
    let grid = previous.grid;
    check_request(&grid, m, options)?;
    let k = (m + options.extra_states).min(grid.interior_len());
    if previous.tracked.len() >= k && !potential.is_real() {
        let v0 = samples(&previous.potential, &grid);
        let v1 = samples(potential, &grid);
        let start = previous.tracked[..k].to_vec();
        if let Ok(tracked) = continue_states(&grid, &v0, &v1, start, options) {
            return Ok(assemble(potential.clone(), grid, m, tracked));
        }
        log::debug!("warm start failed, restarting from the Hermitian problem");
    }
    solve_lowest(potential, &grid, m, options)
}

/// `(Im mu, int Im V |psi|^2 dx)` for an L2-normalized pair; the two agree
/// when gain and loss in the state are balanced against its decay rate.
pub fn balance_check(pair: &EigenPair, potential: &MultiWellPotential, grid: &Grid) -> (f64, f64) {
    let rhs = grid.integrate(
        grid.interior()
            .zip(&pair.wavefunction)
            .map(|(x, psi)| potential.evaluate(x).im * psi.norm_sqr()),
    );
    (pair.energy.im, rhs)
}

fn check_request(grid: &Grid, m: usize, options: &SolverOptions) -> Result<(), SolverError> {
    if m == 0 {
        return Err(SolverError::InvalidOption("at least one state must be requested".into()));
    }
    if !(options.tol > 0.0) {
        return Err(SolverError::InvalidOption(format!(
            "tolerance must be positive (got {})",
            options.tol
        )));
    }
    if m > grid.interior_len() {
        return Err(SolverError::TooManyStates {
            requested: m,
            available: grid.interior_len(),
        });
    }
    Ok(())
}

fn samples(potential: &MultiWellPotential, grid: &Grid) -> Vec<Complex64> {
    grid.interior().map(|x| potential.evaluate(x)).collect()
}

fn assemble(potential: MultiWellPotential, grid: Grid, m: usize, mut tracked: Vec<EigenPair>) -> Spectrum {
    tracked.sort_by(|a, b| {
        a.energy
            .re
            .total_cmp(&b.energy.re)
            .then(a.energy.im.total_cmp(&b.energy.im))
    });
    for pair in &mut tracked {
        normalize_l2(&mut pair.wavefunction, &grid);
    }
    let threshold = potential
        .evaluate(grid.x_min())
        .re
        .min(potential.evaluate(grid.x_max()).re)
        .min(0.0);
    let pairs: Vec<EigenPair> = tracked.iter().take(m).cloned().collect();
    let degenerate = pairs
        .iter()
        .map(|p| {
            let s: Complex64 = p.wavefunction.iter().map(|z| z * z).sum();
            let n2: f64 = p.wavefunction.iter().map(|z| z.norm_sqr()).sum();
            s.norm() < DEGENERACY_THRESHOLD * n2
        })
        .collect();
    let unbound = pairs.iter().map(|p| p.energy.re >= threshold).collect();
    Spectrum {
        pairs,
        grid,
        potential,
        degenerate,
        unbound,
        tracked,
    }
}

fn normalize_l2(psi: &mut [Complex64], grid: &Grid) {
    let norm = grid.integrate(psi.iter().map(|z| z.norm_sqr())).sqrt();
    let (peak, _) = psi
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, z)| if z.norm() > bv { (i, z.norm()) } else { (bi, bv) });
    let phase = psi[peak].conj() / psi[peak].norm();
    let scale = phase / norm;
    psi.iter_mut().for_each(|z| *z *= scale);
    psi[peak] = Complex64::new(psi[peak].re, 0.0);
}

/// Exact eigenpairs of a real potential.
fn hermitian_states(
    potential: &MultiWellPotential,
    grid: &Grid,
    k: usize,
    options: &SolverOptions,
) -> Result<Vec<EigenPair>, SolverError> {
    let op = discretize(potential, grid);
    let d: Vec<f64> = op.diag.iter().map(|z| z.re).collect();
    let e: Vec<f64> = op.upper.iter().map(|z| z.re).collect();
    let values = lowest_eigenvalues(&d, &e, k);
    let n = op.dim();
    let mut found: Vec<EigenPair> = Vec::with_capacity(k);
    for (i, &lambda) in values.iter().enumerate() {
        // Smooth, sign-alternating start vector avoids being orthogonal to
        // the target state.
        let start: Vec<Complex64> = (0..n)
            .map(|j| {
                let s = (j as f64 + 0.5) / n as f64;
                Complex64::new(1.0 + 0.25 * (7.3 * s + i as f64).sin(), 0.0)
            })
            .collect();
        let mut pair = inverse_iteration(&op, start, Complex64::new(lambda, 0.0), &found, i, options, false)?;
        pair.energy = Complex64::new(lambda, 0.0);
        pair.wavefunction.iter_mut().for_each(|z| z.im = 0.0);
        pair.residual = relative_residual(&op, &pair.wavefunction, pair.energy);
        found.push(pair);
    }
    Ok(found)
}

/// Follows `start` (eigenpairs of the operator with potential samples `v0`)
/// to the operator with samples `v1`.
fn continue_states(
    grid: &Grid,
    v0: &[Complex64],
    v1: &[Complex64],
    start: Vec<EigenPair>,
    options: &SolverOptions,
) -> Result<Vec<EigenPair>, SolverError> {
    let dv: Vec<Complex64> = v1.iter().zip(v0).map(|(a, b)| a - b).collect();
    let dv_max = dv.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut states = start;
    if dv_max == 0.0 {
        return Ok(states);
    }
    let mut t = 0.0;
    let mut step = (0.5 * min_gap(&states) / dv_max).clamp(options.min_step, 1.0);
    while t < 1.0 {
        let t_next = (t + step).min(1.0);
        let v: Vec<Complex64> = v0.iter().zip(&dv).map(|(a, d)| a + d * t_next).collect();
        let op = operator(&v, grid);
        // First-order prediction d mu / dt = psi^T dV psi / psi^T psi.
        let predicted: Vec<Complex64> = states
            .iter()
            .map(|s| {
                let num: Complex64 = s.wavefunction.iter().zip(&dv).map(|(p, d)| p * p * d).sum();
                let den: Complex64 = s.wavefunction.iter().map(|p| p * p).sum();
                let slope = if den.norm() > DEGENERACY_THRESHOLD { num / den } else { ZERO };
                s.energy + slope * (t_next - t)
            })
            .collect();
        match step_states(&op, &states, &predicted, options) {
            Some(next) => {
                states = next;
                t = t_next;
                step = (step * 1.5).min(1.0);
            }
            None => {
                if step <= options.min_step {
                    return Err(SolverError::ContinuationStalled { t, step });
                }
                step = (step * 0.5).max(options.min_step);
            }
        }
    }
    // Final polish at the target operator.
    Ok(states)
}

fn step_states(
    op: &Tridiagonal,
    states: &[EigenPair],
    predicted: &[Complex64],
    options: &SolverOptions,
) -> Option<Vec<EigenPair>> {
    let mut next: Vec<EigenPair> = Vec::with_capacity(states.len());
    for (i, (s, &guess)) in states.iter().zip(predicted).enumerate() {
        let pair = inverse_iteration(op, s.wavefunction.clone(), guess, &next, i, options, true).ok()?;
        // Reject jumps to a neighbouring state.
        let nearest_other = predicted
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, p)| (p - guess).norm())
            .fold(f64::INFINITY, f64::min);
        let moved = (pair.energy - guess).norm();
        let allowed = (0.5 * nearest_other).max(1e-6 * (1.0 + guess.norm()));
        if moved > allowed {
            return None;
        }
        if next.iter().any(|p| (p.energy - pair.energy).norm() <= 1e-10 * (1.0 + pair.energy.norm())) {
            return None;
        }
        next.push(pair);
    }
    Some(next)
}

fn min_gap(states: &[EigenPair]) -> f64 {
    let mut gap = f64::INFINITY;
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            gap = gap.min((a.energy - b.energy).norm());
        }
    }
    if gap.is_finite() {
        gap.max(1e-6)
    } else {
        1.0
    }
}

fn relative_residual(op: &Tridiagonal, psi: &[Complex64], mu: Complex64) -> f64 {
    let mut hp = vec![ZERO; psi.len()];
    op.apply(psi, &mut hp);
    let r: f64 = hp
        .iter()
        .zip(psi)
        .map(|(a, b)| (a - mu * b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    r / n
}

/// Shifted inverse iteration started at `shift`, switching to Rayleigh
/// quotient shifts once close, with c-product deflation against `deflate`.
fn inverse_iteration(
    op: &Tridiagonal,
    start: Vec<Complex64>,
    shift: Complex64,
    deflate: &[EigenPair],
    state: usize,
    options: &SolverOptions,
    rayleigh: bool,
) -> Result<EigenPair, SolverError> {
    let n = op.dim();
    let deflators: Vec<(&[Complex64], Complex64)> = deflate
        .iter()
        .filter_map(|p| {
            let s: Complex64 = p.wavefunction.iter().map(|z| z * z).sum();
            let n2: f64 = p.wavefunction.iter().map(|z| z.norm_sqr()).sum();
            (s.norm() >= DEGENERACY_THRESHOLD * n2).then_some((p.wavefunction.as_slice(), s))
        })
        .collect();
    let project = |y: &mut [Complex64]| {
        for &(phi, s) in &deflators {
            let c: Complex64 = phi.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<Complex64>() / s;
            y.iter_mut().zip(phi).for_each(|(yi, pi)| *yi -= c * pi);
        }
    };

    let mut v = start;
    project(&mut v);
    normalize_euclid(&mut v);
    let mut sigma = shift;
    let mut hv = vec![ZERO; n];
    let mut last_residual = f64::INFINITY;
    let mut converged_once = false;
    for iter in 0..options.max_iter {
        let lu = op.factor_shifted(sigma);
        lu.solve(&mut v);
        project(&mut v);
        if !normalize_euclid(&mut v) {
            break;
        }
        op.apply(&v, &mut hv);
        let vv: Complex64 = v.iter().map(|z| z * z).sum();
        let theta = if vv.norm() > DEGENERACY_THRESHOLD {
            v.iter().zip(&hv).map(|(a, b)| a * b).sum::<Complex64>() / vv
        } else {
            v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum::<Complex64>()
        };
        let residual = hv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - theta * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        last_residual = residual;
        let target = options.tol * theta.norm().max(1.0);
        if residual <= target {
            // One extra sweep at the converged shift sharpens the vector to
            // roundoff level.
            if converged_once || residual <= 1e-3 * target {
                return Ok(EigenPair {
                    energy: theta,
                    wavefunction: v,
                    residual,
                });
            }
            converged_once = true;
        }
        if (rayleigh && (iter >= 1 || residual < 1e-2)) || (!rayleigh && iter >= 2) {
            sigma = theta;
        }
    }
    Err(SolverError::NoConvergence {
        state,
        shift: sigma,
        iterations: options.max_iter,
        residual: last_residual,
    })
}

fn normalize_euclid(v: &mut [Complex64]) -> bool {
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return false;
    }
    v.iter_mut().for_each(|z| *z /= norm);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::GaussianWell;
    use nalgebra::DMatrix;

    fn double_well(v1: f64, g1: f64, v2: f64, g2: f64) -> MultiWellPotential {
        MultiWellPotential::new(vec![
            GaussianWell::new(v1, g1, 1.0, -1.5),
            GaussianWell::new(v2, g2, 1.0, 1.5),
        ])
        .unwrap()
    }

    /// Independent dense eigenvalue oracle (complex Schur form).
    fn dense_eigenvalues(op: &Tridiagonal) -> Vec<Complex64> {
        let n = op.dim();
        let dense = op.to_dense();
        let m = DMatrix::from_fn(n, n, |i, j| dense[i][j]);
        let schur = nalgebra::linalg::Schur::new(m);
        let (_, t) = schur.unpack();
        let mut ev: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        ev
    }

    #[test]
    fn free_stencil() {
        let p = MultiWellPotential::new(vec![GaussianWell::new(0.0, 0.0, 1.0, 0.0)]).unwrap();
        let g = Grid::new(0.0, 4.0, 5).unwrap();
        let op = discretize(&p, &g);
        assert_eq!(op.diag, vec![Complex64::new(2.0, 0.0); 3]);
        assert_eq!(op.upper, vec![Complex64::new(-1.0, 0.0); 2]);
        assert_eq!(op.lower, vec![Complex64::new(-1.0, 0.0); 2]);
    }

    #[test]
    fn real_potential_gives_real_matrix() {
        let p = double_well(-3.0, 0.0, -3.2, 0.0);
        let op = discretize(&p, &Grid::new(-8.0, 8.0, 101).unwrap());
        for z in op.diag.iter().chain(&op.upper).chain(&op.lower) {
            assert_eq!(*z, z.conj());
        }
    }

    #[test]
    fn single_real_well_ground_state() {
        let p = MultiWellPotential::new(vec![GaussianWell::new(-3.0, 0.0, 1.0, 0.0)]).unwrap();
        let g = Grid::new(-12.0, 12.0, 2001).unwrap();
        let s = solve_lowest(&p, &g, 1, &SolverOptions::default()).unwrap();
        let mu = s.energies()[0];
        assert!(mu.re < 0.0);
        assert!(mu.im.abs() < 1e-10);
        assert!((s.pairs()[0].l2_norm(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_oracle_on_small_grids() {
        let opts = SolverOptions::default();
        for (p, n) in [
            (double_well(-3.0, 0.0, -3.0, 0.0), 201),
            (double_well(-3.0, 0.4, -3.2, -0.178948), 301),
            (double_well(-3.0, 1.2, -2.5, -0.9), 401),
        ] {
            let g = Grid::new(-9.5, 9.5, n).unwrap();
            let s = solve_lowest(&p, &g, 4, &opts).unwrap();
            let oracle = dense_eigenvalues(&discretize(&p, &g));
            for (mu, ex) in s.energies().iter().zip(&oracle) {
                assert!(
                    (mu - ex).norm() <= 1e-9 * ex.norm().max(1.0),
                    "{mu} vs {ex} on {n} points"
                );
            }
        }
    }

    #[test]
    fn symmetric_double_well_splitting() {
        let p = double_well(-3.0, 0.0, -3.0, 0.0);
        let g = Grid::auto(&p, None);
        let s = solve_lowest(&p, &g, 2, &SolverOptions::default()).unwrap();
        let e = s.energies();
        assert!(e.iter().all(|z| z.im == 0.0));
        // Levels -2.32450 and -1.85395 from a fine-grid reference.
        assert!((e[0].re + 2.32450).abs() < 5e-4, "{}", e[0]);
        assert!((e[1].re + 1.85395).abs() < 5e-4, "{}", e[1]);
        let half_split = 0.5 * (e[1].re - e[0].re);
        assert!((half_split - 0.235_279).abs() < 2e-5, "{half_split}");
    }

    #[test]
    fn balance_identity_holds() {
        let p = double_well(-3.0, 0.4, -3.2, -0.1);
        let g = Grid::auto(&p, None);
        let s = solve_lowest(&p, &g, 3, &SolverOptions::default()).unwrap();
        for pair in s.pairs() {
            let (lhs, rhs) = balance_check(pair, &p, &g);
            assert!((lhs - rhs).abs() <= 1e-8 * pair.energy.norm().max(1.0), "{lhs} vs {rhs}");
        }
        let real = p.real_part();
        let s = solve_lowest(&real, &g, 2, &SolverOptions::default()).unwrap();
        for pair in s.pairs() {
            let (lhs, rhs) = balance_check(pair, &real, &g);
            assert!(lhs.abs() < 1e-12 && rhs.abs() < 1e-12);
        }
    }

    #[test]
    fn states_are_c_orthogonal_and_sorted() {
        let p = double_well(-3.0, 0.4, -3.4, -0.2);
        let g = Grid::auto(&p, None);
        let s = solve_lowest(&p, &g, 4, &SolverOptions::default()).unwrap();
        let e = s.energies();
        for w in e.windows(2) {
            assert!(w[0].re <= w[1].re);
        }
        for (i, a) in s.pairs().iter().enumerate() {
            for b in &s.pairs()[i + 1..] {
                let c: Complex64 = g.integrate(a.wavefunction.iter().zip(&b.wavefunction).map(|(x, y)| x * y));
                assert!(c.norm() < 1e-8, "c-overlap {c}");
            }
        }
    }

    #[test]
    fn left_eigenvector_is_conjugate_of_right() {
        let p = double_well(-3.0, 0.6, -3.2, -0.3);
        let g = Grid::auto(&p, None);
        let op = discretize(&p, &g);
        let s = solve_lowest(&p, &g, 2, &SolverOptions::default()).unwrap();
        for pair in s.pairs() {
            // psi_L = conj(psi_R); check psi_L^dagger H = mu psi_L^dagger,
            // i.e. H^T psi_R = mu psi_R.
            let mut out = vec![ZERO; op.dim()];
            op.apply_transpose(&pair.wavefunction, &mut out);
            let r: f64 = out
                .iter()
                .zip(&pair.wavefunction)
                .map(|(a, b)| (a - pair.energy * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let n: f64 = pair.wavefunction.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(r / n < 1e-8);
        }
    }

    #[test]
    fn conjugate_potential_gives_conjugate_spectrum() {
        let p = double_well(-3.0, 0.5, -3.3, -0.2);
        let g = Grid::auto(&p, None);
        let opts = SolverOptions::default();
        let a = solve_lowest(&p, &g, 3, &opts).unwrap().energies();
        let b = solve_lowest(&p.conjugate(), &g, 3, &opts).unwrap().energies();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.conj() - y).norm() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let opts = SolverOptions::default();
        let p = double_well(-3.0, 0.4, -3.2, -0.17);
        let g = Grid::auto(&p, None);
        let first = solve_lowest(&p, &g, 2, &opts).unwrap();
        let q = double_well(-3.0, 0.4, -3.2, -0.18);
        let warm = solve_lowest_from(&first, &q, 2, &opts).unwrap();
        let cold = solve_lowest(&q, &g, 2, &opts).unwrap();
        for (a, b) in warm.energies().iter().zip(cold.energies()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn second_order_grid_convergence() {
        let p = MultiWellPotential::new(vec![GaussianWell::new(-3.0, 0.3, 1.0, 0.0)]).unwrap();
        let opts = SolverOptions::default();
        let g1 = Grid::new(-10.0, 10.0, 201).unwrap();
        let g2 = g1.refined();
        let g3 = g2.refined();
        let mu = |g: &Grid| solve_lowest(&p, g, 1, &opts).unwrap().energies()[0];
        let (a, b, c) = (mu(&g1), mu(&g2), mu(&g3));
        let ratio = (a - b).norm() / (b - c).norm();
        assert!((3.5..=4.5).contains(&ratio), "Richardson ratio {ratio}");
    }

    #[test]
    fn rejects_bad_requests() {
        let p = double_well(-3.0, 0.0, -3.0, 0.0);
        let g = Grid::new(-5.0, 5.0, 5).unwrap();
        assert!(matches!(
            solve_lowest(&p, &g, 4, &SolverOptions::default()),
            Err(SolverError::TooManyStates { .. })
        ));
        let bad = SolverOptions {
            tol: 0.0,
            ..SolverOptions::default()
        };
        assert!(matches!(
            solve_lowest(&p, &g, 1, &bad),
            Err(SolverError::InvalidOption(_))
        ));
    }
}
