//! Powell hybrid (dogleg trust region) solver for square nonlinear systems,
//! and the residual maps whose zeros balance gain and loss.

use std::fmt;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::grid_solver::{solve_lowest, solve_lowest_from, SolverOptions, Spectrum};
use crate::matrix_model::{dense_eigenvalues, GainLossResponse};
use crate::potential::{MultiWellPotential, Param};

/// A map `R^k -> R^k`. Failures (solver breakdown, invalid parameters) are
/// reported as `Err` and treated like an infinite residual.
pub trait Residual: Sync {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, String>;
}

impl<F> Residual for F
where
    F: Fn(&[f64]) -> Result<Vec<f64>, String> + Sync,
{
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, String> {
        self(x)
    }
}

/// Tolerances and budget shared by every root search of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RootOptions {
    pub f_tol: f64,
    pub x_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Residual evaluations allowed; `None` means `200 (k + 1)`.
    pub max_evals: Option<usize>,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-10,
            x_tol: 1e-10,
            fd_step: 1e-6,
            max_evals: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RootProblem<R> {
    pub residual: R,
    pub initial_guess: Vec<f64>,
    /// Relative finite-difference steps: column `i` of the Jacobian uses
    /// `step_scale[i] * max(1, |x_i|)`.
    pub step_scale: Vec<f64>,
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl<R: Residual> RootProblem<R> {
    pub fn new(residual: R, initial_guess: Vec<f64>) -> Self {
        Self::with_options(residual, initial_guess, &RootOptions::default())
    }

    pub fn with_options(residual: R, initial_guess: Vec<f64>, options: &RootOptions) -> Self {
        let k = initial_guess.len();
        Self {
            residual,
            initial_guess,
            step_scale: vec![options.fd_step; k],
            max_evals: options.max_evals.unwrap_or(200 * (k + 1)),
            x_tol: options.x_tol,
            f_tol: options.f_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// The residual could not be evaluated at the initial guess.
    InitialResidual(String),
    MaxEvaluations,
    SingularJacobian,
    TrustRegionCollapse,
    /// Residual and parameter dimensions differ.
    NotSquare { params: usize, residuals: usize },
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::InitialResidual(e) => write!(f, "residual not evaluable at the initial guess: {e}"),
            FailureReason::MaxEvaluations => write!(f, "maximum number of residual evaluations reached"),
            FailureReason::SingularJacobian => write!(f, "Jacobian is singular"),
            FailureReason::TrustRegionCollapse => write!(f, "trust region collapsed without convergence"),
            FailureReason::NotSquare { params, residuals } => {
                write!(f, "{residuals} residuals for {params} parameters")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootResult {
    pub solution: Vec<f64>,
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub failure_reason: Option<FailureReason>,
    /// Euclidean length of the last accepted step.
    pub last_step: f64,
}

struct Counter<'a, R> {
    residual: &'a R,
    evals: usize,
}

impl<R: Residual> Counter<'_, R> {
    fn eval(&mut self, x: &[f64]) -> Option<DVector<f64>> {
        self.evals += 1;
        match self.residual.eval(x) {
            Ok(v) if v.iter().all(|r| r.is_finite()) => Some(DVector::from_vec(v)),
            Ok(_) => None,
            Err(e) => {
                log::trace!("residual failed at {x:?}: {e}");
                None
            }
        }
    }
}

/// Finds a zero of `problem.residual` starting at `problem.initial_guess`.
///
/// Dogleg steps inside a trust region; the Jacobian is estimated by forward
/// differences, updated by Broyden rank-one corrections after every step and
/// re-estimated after repeated poor steps. Deterministic given its inputs.
pub fn solve_hybrid<R: Residual>(problem: &RootProblem<R>) -> RootResult {
    let k = problem.initial_guess.len();
    let mut f_eval = Counter {
        residual: &problem.residual,
        evals: 0,
    };
    let mut x = DVector::from_column_slice(&problem.initial_guess);
    let fail = |x: &DVector<f64>, f: Option<&DVector<f64>>, evals: usize, reason: FailureReason, last_step: f64| {
        let residual: Vec<f64> = f.map(|v| v.iter().copied().collect()).unwrap_or_default();
        RootResult {
            solution: x.iter().copied().collect(),
            residual_norm: f.map(|v| v.norm()).unwrap_or(f64::INFINITY),
            residual,
            evaluations: evals,
            converged: false,
            failure_reason: Some(reason),
            last_step,
        }
    };
    let mut f = match problem.residual.eval(x.as_slice()) {
        Ok(v) if v.len() != k => {
            return fail(&x, None, 1, FailureReason::NotSquare { params: k, residuals: v.len() }, 0.0)
        }
        Ok(v) if v.iter().all(|r| r.is_finite()) => DVector::from_vec(v),
        Ok(v) => return fail(&x, None, 1, FailureReason::InitialResidual(format!("non-finite residual {v:?}")), 0.0),
        Err(e) => return fail(&x, None, 1, FailureReason::InitialResidual(e), 0.0),
    };
    f_eval.evals = 1;
    let mut fnorm = f.norm();
    let mut last_step = 0.0;
    let scale = |x: &DVector<f64>| x.norm().max(1.0);

    let mut jac = match jacobian(&mut f_eval, &x, &f, &problem.step_scale) {
        Some(j) => j,
        None => return fail(&x, Some(&f), f_eval.evals, FailureReason::SingularJacobian, 0.0),
    };
    let mut delta = 100.0 * scale(&x);
    let mut poor_steps = 0;
    let mut since_refresh = 0;

    loop {
        let newton = jac.clone().lu().solve(&(-&f));
        if fnorm <= problem.f_tol {
            let step_ok = newton.as_ref().is_none_or(|p| p.norm() <= problem.x_tol * scale(&x));
            if step_ok || fnorm == 0.0 || poor_steps >= 2 {
                // A final Newton correction is kept when it does not hurt.
                if let Some(p) = newton.as_ref().filter(|p| fnorm > 0.0 && p.norm() > 0.0) {
                    let x_new = &x + p;
                    if let Some(fv) = f_eval.eval(x_new.as_slice()) {
                        if fv.norm() <= fnorm {
                            last_step = p.norm();
                            x = x_new;
                            f = fv;
                            fnorm = f.norm();
                        }
                    }
                }
                return RootResult {
                    solution: x.iter().copied().collect(),
                    residual: f.iter().copied().collect(),
                    residual_norm: fnorm,
                    evaluations: f_eval.evals,
                    converged: true,
                    failure_reason: None,
                    last_step,
                };
            }
        }
        if f_eval.evals >= problem.max_evals {
            return fail(&x, Some(&f), f_eval.evals, FailureReason::MaxEvaluations, last_step);
        }
        let gradient = -(jac.transpose() * &f);
        let p = match dogleg(&jac, newton.as_ref(), &gradient, delta) {
            Some(p) => p,
            None => return fail(&x, Some(&f), f_eval.evals, FailureReason::SingularJacobian, last_step),
        };
        let pnorm = p.norm();
        let x_new = &x + &p;
        let predicted_norm = (&f + &jac * &p).norm();
        let (ratio, f_new) = match f_eval.eval(x_new.as_slice()) {
            Some(fv) => {
                let actual = 1.0 - fv.norm() / fnorm;
                let predicted = 1.0 - predicted_norm / fnorm;
                let ratio = if predicted > 0.0 { actual / predicted } else { -1.0 };
                (ratio, Some(fv))
            }
            None => (f64::NEG_INFINITY, None),
        };

        // Trust-region radius update.
        if ratio < 0.1 {
            poor_steps += 1;
            delta = 0.5 * delta.min(pnorm);
        } else {
            poor_steps = 0;
            if ratio >= 0.5 || (ratio - 1.0).abs() <= 0.1 {
                delta = delta.max(2.0 * pnorm);
            }
        }

        if let Some(fv) = &f_new {
            // Broyden update with the observed secant.
            let y = fv - &f - &jac * &p;
            let pp = pnorm * pnorm;
            if pp > 0.0 {
                jac += (&y * p.transpose()) / pp;
            }
        }
        if ratio >= 1e-4 {
            if let Some(fv) = f_new {
                x = x_new;
                f = fv;
                fnorm = f.norm();
                last_step = pnorm;
            }
        }

        since_refresh += 1;
        if poor_steps >= 2 || since_refresh >= 8 {
            match jacobian(&mut f_eval, &x, &f, &problem.step_scale) {
                Some(j) => jac = j,
                None => return fail(&x, Some(&f), f_eval.evals, FailureReason::SingularJacobian, last_step),
            }
            since_refresh = 0;
            if poor_steps >= 2 {
                poor_steps = 0;
            }
        }

        if delta <= problem.x_tol * scale(&x) * 1e-2 && fnorm > problem.f_tol {
            return fail(&x, Some(&f), f_eval.evals, FailureReason::TrustRegionCollapse, last_step);
        }
    }
}

fn jacobian<R: Residual>(
    f_eval: &mut Counter<'_, R>,
    x: &DVector<f64>,
    f: &DVector<f64>,
    step_scale: &[f64],
) -> Option<DMatrix<f64>> {
    let k = x.len();
    let mut jac = DMatrix::zeros(k, k);
    for i in 0..k {
        let h = step_scale[i] * x[i].abs().max(1.0);
        let mut xs = x.clone();
        xs[i] += h;
        let (fs, h) = match f_eval.eval(xs.as_slice()) {
            Some(v) => (v, h),
            None => {
                // Try the other side.
                xs[i] = x[i] - h;
                (f_eval.eval(xs.as_slice())?, -h)
            }
        };
        jac.set_column(i, &((fs - f) / h));
    }
    Some(jac)
}

fn dogleg(
    jac: &DMatrix<f64>,
    newton: Option<&DVector<f64>>,
    gradient: &DVector<f64>,
    delta: f64,
) -> Option<DVector<f64>> {
    if let Some(p) = newton {
        if p.iter().all(|v| v.is_finite()) && p.norm() <= delta {
            return Some(p.clone());
        }
    }
    let gnorm = gradient.norm();
    if gnorm == 0.0 {
        return None;
    }
    let jg = jac * gradient;
    let jgnorm2 = jg.norm_squared();
    if jgnorm2 == 0.0 {
        return None;
    }
    let cauchy = gradient * (gnorm * gnorm / jgnorm2);
    let cnorm = cauchy.norm();
    let newton = match newton {
        Some(p) if p.iter().all(|v| v.is_finite()) => p,
        _ => return Some(gradient * (delta.min(cnorm) / gnorm)),
    };
    if cnorm >= delta {
        return Some(gradient * (delta / gnorm));
    }
    // Point on the segment cauchy -> newton at distance delta.
    let d = newton - &cauchy;
    let a = d.norm_squared();
    let b = 2.0 * cauchy.dot(&d);
    let c = cnorm * cnorm - delta * delta;
    let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    Some(cauchy + d * tau)
}

/// `Im e_k(mu_1, ..., mu_m)` for `k = 1..m`, with `e_k` the elementary
/// symmetric polynomials. All vanish iff the multiset is closed under
/// conjugation.
pub fn elementary_symmetric_imag(mu: &[Complex64]) -> Vec<f64> {
    let m = mu.len();
    let mut e = vec![Complex64::new(0.0, 0.0); m + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for (i, &z) in mu.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] = e[k] + e[k - 1] * z;
        }
    }
    e[1..].iter().map(|z| z.im).collect()
}

/// What a [`SpectralResidual`] extracts from the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceCondition {
    /// `Im mu_1` of the lowest state.
    GroundState,
    /// `Im e_k` of the `k` lowest states, one condition per free parameter.
    SymmetricFunctions,
}

/// Largest parameter change over which evaluations are continued from the
/// previous spectrum instead of solved afresh.
const WARM_START_RADIUS: f64 = 0.05;

/// Balance residual of the continuous problem as a function of selected
/// potential parameters.
///
/// Each evaluation continues the states of the previous one; clones start
/// cold, so independent searches stay independent.
#[derive(Debug)]
pub struct SpectralResidual {
    pub base: MultiWellPotential,
    pub free: Vec<Param>,
    pub grid: Grid,
    pub options: SolverOptions,
    pub states: usize,
    pub condition: BalanceCondition,
    last: Mutex<Option<(Vec<f64>, Spectrum)>>,
}

impl Clone for SpectralResidual {
    fn clone(&self) -> Self {
        Self::new(
            self.base.clone(),
            self.free.clone(),
            self.grid,
            self.options,
            self.states,
            self.condition,
        )
    }
}

impl SpectralResidual {
    pub fn new(
        base: MultiWellPotential,
        free: Vec<Param>,
        grid: Grid,
        options: SolverOptions,
        states: usize,
        condition: BalanceCondition,
    ) -> Self {
        Self {
            base,
            free,
            grid,
            options,
            states,
            condition,
            last: Mutex::new(None),
        }
    }

    pub fn potential_at(&self, x: &[f64]) -> Result<MultiWellPotential, String> {
        self.base.with_params(&self.free, x).map_err(|e| e.to_string())
    }

    /// Cold solve at `x`, independent of earlier evaluations.
    pub fn spectrum_at(&self, x: &[f64]) -> Result<Spectrum, String> {
        let p = self.potential_at(x)?;
        solve_lowest(&p, &self.grid, self.states, &self.options).map_err(|e| e.to_string())
    }

    fn warm_spectrum_at(&self, x: &[f64]) -> Result<Spectrum, String> {
        let p = self.potential_at(x)?;
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        let near = |y: &[f64]| x.iter().zip(y).all(|(a, b)| (a - b).abs() <= WARM_START_RADIUS);
        let s = match last.as_ref() {
            Some((y, prev)) if near(y) => solve_lowest_from(prev, &p, self.states, &self.options),
            _ => solve_lowest(&p, &self.grid, self.states, &self.options),
        }
        .map_err(|e| e.to_string())?;
        *last = Some((x.to_vec(), s.clone()));
        Ok(s)
    }

    pub fn initial_values(&self) -> Vec<f64> {
        self.free.iter().map(|&p| self.base.param(p).unwrap_or(0.0)).collect()
    }
}

impl Residual for SpectralResidual {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, String> {
        let s = self.warm_spectrum_at(x)?;
        let e = s.energies();
        Ok(match self.condition {
            BalanceCondition::GroundState => vec![e[0].im],
            BalanceCondition::SymmetricFunctions => elementary_symmetric_imag(&e[..self.free.len()]),
        })
    }
}

/// `Im mu_1` of a two-well potential as a function of one free parameter,
/// from the two lowest states.
pub fn double_well_residual(free: Param, fixed: &MultiWellPotential, grid: &Grid, options: &SolverOptions) -> SpectralResidual {
    SpectralResidual::new(fixed.clone(), vec![free], *grid, *options, 2, BalanceCondition::GroundState)
}

/// `Im` of the elementary symmetric functions of the three lowest
/// eigenvalues as a function of `(Gamma_1, Gamma_2, Gamma_3)`.
pub fn triple_well_residual(fixed: &MultiWellPotential, grid: &Grid, options: &SolverOptions) -> SpectralResidual {
    SpectralResidual::new(
        fixed.clone(),
        (0..3).map(Param::GainLoss).collect(),
        *grid,
        *options,
        3,
        BalanceCondition::SymmetricFunctions,
    )
}

/// The same symmetric-function conditions on the eigenvalues of `H_eff`
/// as a function of the gain-loss parameters.
#[derive(Debug, Clone)]
pub struct ModelResidual {
    pub response: GainLossResponse,
}

impl Residual for ModelResidual {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, String> {
        Ok(elementary_symmetric_imag(&dense_eigenvalues(&self.response.at(x))))
    }
}
