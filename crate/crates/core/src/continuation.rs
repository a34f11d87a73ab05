//! Seeding from the matrix model, parameter sweeps, lattice scans and
//! tracing of the region in which balanced configurations exist.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::grid_solver::SolverOptions;
use crate::matrix_model::{
    balanced_gamma_closed_form, build_basis, build_model, coupling, dense_eigenvalues, orthogonalize,
    assemble, sensitivities, three_well_admissible, two_well_epsilon, BalancedGamma, EffectiveModel,
    GainLossResponse, JMode, MatrixModelError,
};
use crate::potential::{MultiWellPotential, Param, PotentialError};
use crate::rootfind::{
    solve_hybrid, BalanceCondition, ModelResidual, RootOptions, RootProblem, SpectralResidual,
};
use crate::symmetrization::{classify, Classification, DEFAULT_TOLERANCE};

/// Solutions with every free gain-loss parameter below this are the trivial
/// Hermitian root of the symmetric-function conditions.
pub const TRIVIAL_LIMIT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error("matrix model has no balanced configuration: {0}")]
    Infeasible(String),
    #[error("gain-loss parameters of the matrix model become imaginary (t^2 = {t2:.3e})")]
    ImaginaryGainLoss { t2: f64 },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("start point is not solvable: {0}")]
    StartFailed(String),
    #[error(transparent)]
    Model(#[from] MatrixModelError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Initial guess for the free parameters obtained from the matrix model.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub params: Vec<Param>,
    pub values: Vec<f64>,
    /// For three wells: the closed-form gains mapped through the diagonal
    /// sensitivities, before the balance conditions are solved on `H_eff`.
    pub linear_guess: Option<Vec<f64>>,
    pub j: Option<f64>,
    pub model: EffectiveModel,
}

/// Seeds the free parameters of a two- or three-well balance problem.
///
/// Two wells: one free parameter (a gain-loss term or a depth), fixed by the
/// two-well criterion with the tunneling rate chosen by `j_mode`.
/// Three wells: the three gain-loss terms, from the closed-form balanced
/// gains of the ideal model, refined by solving the balance conditions on
/// `H_eff` itself.
pub fn seed_from_matrix_model(
    potential: &MultiWellPotential,
    grid: &Grid,
    free: &[Param],
    j_mode: JMode,
) -> Result<Seed, ContinuationError> {
    match (potential.len(), free) {
        (2, [p]) => seed_two_well(potential, grid, *p, j_mode),
        (3, _) => seed_three_well(potential, grid, free, j_mode),
        (n, _) => Err(ContinuationError::InvalidSpec(format!(
            "matrix-model seeding needs two wells with one free parameter or three wells \
             with three free gain-loss parameters (got {n} wells, {} free)",
            free.len()
        ))),
    }
}

fn ground_state_real(eps: f64, g1: f64, g2: f64, j: f64) -> bool {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let m = DMatrix::from_row_slice(2, 2, &[c(0.0, g1), c(-j, 0.0), c(-j, 0.0), c(eps, g2)]);
    let ev = dense_eigenvalues(&m);
    ev[0].im.abs() <= 1e-8 * (1.0 + ev[0].norm())
}

fn seed_two_well(
    potential: &MultiWellPotential,
    grid: &Grid,
    free: Param,
    j_mode: JMode,
) -> Result<Seed, ContinuationError> {
    let basis = build_basis(potential, grid)?;
    let model = orthogonalize(&assemble(&basis, potential)?)?;
    let j = coupling(potential, grid, j_mode)?.expect("two wells have a coupling");
    let response = GainLossResponse::new(&basis, potential)?;
    let current: Vec<f64> = potential.wells().iter().map(|w| w.gain_loss).collect();
    let gammas = |g: &[f64]| -> [f64; 2] {
        let h = response.at(g);
        [h[(0, 0)].im, h[(1, 1)].im]
    };
    let eps = model.epsilon[1] - model.epsilon[0];
    let infeasible = || {
        ContinuationError::Infeasible(
            "the two-well criterion needs gain-loss terms of opposite sign with |gamma1 gamma2| <= J^2".into(),
        )
    };

    let value = match free {
        Param::GainLoss(k) => {
            let o = 1 - k;
            let at = |x: f64| {
                let mut g = current.clone();
                g[k] = x;
                gammas(&g)
            };
            if current[o] == 0.0 {
                // Nothing to compensate.
                0.0
            } else if eps.abs() <= 1e-9 * (1.0 + model.epsilon[0].abs()) {
                // Equal on-site energies: gamma1 + gamma2 = 0, linear in x.
                let s0 = at(0.0);
                let s1 = at(1.0);
                let (f0, f1) = (s0[0] + s0[1], s1[0] + s1[1]);
                let x = -f0 / (f1 - f0);
                let g = at(x);
                if two_well_epsilon(g[0], g[1], j).is_none() {
                    return Err(infeasible());
                }
                x
            } else {
                let g0 = at(0.0);
                let slope = at(1.0)[k] - g0[k];
                let limit = j * j / g0[o].abs();
                let sign = -g0[o].signum();
                let to_x = |gamma: f64| (gamma - g0[k]) / slope;
                let (a, b) = (to_x(sign * 1e-9 * limit), to_x(sign * 1.05 * limit));
                let criterion = |x: f64| {
                    let g = at(x);
                    eps * eps * g[0] * g[1] + (g[0] + g[1]).powi(2) * (g[0] * g[1] + j * j)
                };
                let samples = 400;
                let mut best: Option<(f64, f64)> = None;
                let mut prev = (a, criterion(a));
                for i in 1..=samples {
                    let x = a + (b - a) * i as f64 / samples as f64;
                    let fx = criterion(x);
                    if prev.1 * fx <= 0.0 {
                        let root = bisect(&criterion, prev.0, x);
                        let g = at(root);
                        let ok = two_well_epsilon(g[0], g[1], j).is_some_and(|(p, m)| {
                            (eps - p).abs().min((eps - m).abs()) <= 1e-6 * (1.0 + eps.abs())
                        }) && ground_state_real(eps, g[0], g[1], j);
                        if ok && best.is_none_or(|(_, gk)| g[k].abs() < gk) {
                            best = Some((root, g[k].abs()));
                        }
                    }
                    prev = (x, fx);
                }
                best.ok_or_else(infeasible)?.0
            }
        }
        Param::Depth(k) => {
            let g = gammas(&current);
            let (plus, minus) = two_well_epsilon(g[0], g[1], j).ok_or_else(infeasible)?;
            let target = [plus, minus]
                .into_iter()
                .filter(|&e| ground_state_real(e, g[0], g[1], j))
                .min_by(|a, b| (a - eps).abs().total_cmp(&(b - eps).abs()))
                .ok_or_else(infeasible)?;
            let sens = sensitivities(&potential.real_part(), grid)?;
            // eps = epsilon_2 - epsilon_1 grows with V_2 and falls with V_1.
            let d = if k == 1 {
                sens.d_epsilon_d_depth[1]
            } else {
                -sens.d_epsilon_d_depth[0]
            };
            potential.param(free)? + (target - eps) / d
        }
    };
    Ok(Seed {
        params: vec![free],
        values: vec![value],
        linear_guess: None,
        j: Some(j),
        model,
    })
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m);
        if fa * fm <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

fn seed_three_well(
    potential: &MultiWellPotential,
    grid: &Grid,
    free: &[Param],
    j_mode: JMode,
) -> Result<Seed, ContinuationError> {
    let expected: Vec<Param> = (0..3).map(Param::GainLoss).collect();
    if free != expected.as_slice() {
        return Err(ContinuationError::InvalidSpec(
            "three-well seeding solves for gain_loss:1, gain_loss:2, gain_loss:3".into(),
        ));
    }
    let (basis, _, model) = build_model(&potential.real_part(), grid)?;
    let j = match j_mode {
        JMode::Fixed(v) => v,
        _ => model.j.expect("three wells have a coupling"),
    };
    let eps = [model.epsilon[0], model.epsilon[1], model.epsilon[2]];
    let gamma = match balanced_gamma_closed_form(eps, j) {
        BalancedGamma::Real(a, b) => [a, b]
            .into_iter()
            .find(|g| three_well_admissible(eps, *g))
            .ok_or_else(|| ContinuationError::Infeasible("on-site energies are not strictly ordered".into()))?,
        BalancedGamma::Imaginary { t2 } => return Err(ContinuationError::ImaginaryGainLoss { t2 }),
        BalancedGamma::Degenerate => {
            return Err(ContinuationError::Infeasible("equal on-site energies".into()));
        }
    };
    let sens = sensitivities(&potential.real_part(), grid)?;
    let linear: Vec<f64> = gamma
        .iter()
        .zip(&sens.d_gamma_d_gain_loss)
        .map(|(g, s)| g / s)
        .collect();
    let response = GainLossResponse::new(&basis, potential)?;
    let result = solve_hybrid(&RootProblem::new(ModelResidual { response }, linear.clone()));
    let values = if result.converged && max_abs(&result.solution) > TRIVIAL_LIMIT {
        result.solution
    } else {
        log::warn!("balance conditions on H_eff not solved; using the linearized gains");
        linear.clone()
    };
    Ok(Seed {
        params: free.to_vec(),
        values,
        linear_guess: Some(linear),
        j: Some(j),
        model,
    })
}

/// Continuation steps start from a good prediction; a search that needs more
/// than this is treated as a failed step and the step is halved.
fn step_options(root: &RootOptions, k: usize) -> RootOptions {
    RootOptions {
        max_evals: Some(root.max_evals.unwrap_or(30 * (k + 1))),
        ..*root
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Where the first guess of a sweep comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    /// Every point seeded independently from the matrix model.
    MatrixModel,
    /// The start point seeded from the matrix model, the others continued
    /// from their neighbour.
    PreviousPoint,
    /// The start point seeded with the given values, the others continued.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base_potential: MultiWellPotential,
    pub swept: Param,
    pub values: Vec<f64>,
    pub solved: Vec<Param>,
    pub seed_mode: SeedMode,
    pub grid: Grid,
    pub solver: SolverOptions,
    pub root: RootOptions,
    pub j_mode: JMode,
    /// Swept value at which continuation starts (default: the first value);
    /// the sweep proceeds outward from it in both directions.
    pub start_at: Option<f64>,
    /// Largest continuation step between recorded values.
    pub max_step: Option<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ContinuationError> {
        let bad = |m: String| Err(ContinuationError::InvalidSpec(m));
        if self.values.is_empty() {
            return bad("the swept value list is empty".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("swept values must be finite".into());
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return bad("swept values must be strictly monotone".into());
        }
        if self.solved.is_empty() || self.solved.len() > self.base_potential.len() {
            return bad(format!(
                "{} solved parameters for a {}-well potential",
                self.solved.len(),
                self.base_potential.len()
            ));
        }
        if self.solved.contains(&self.swept) {
            return bad(format!("{} is both swept and solved", self.swept));
        }
        for p in self.solved.iter().chain([&self.swept]) {
            self.base_potential.param(*p)?;
        }
        if let SeedMode::Explicit(v) = &self.seed_mode {
            if v.len() != self.solved.len() {
                return bad(format!("explicit seed has {} values for {} solved parameters", v.len(), self.solved.len()));
            }
        }
        if let Some(s) = self.max_step {
            if !(s > 0.0) {
                return bad("max_step must be positive".into());
            }
        }
        Ok(())
    }

    fn residual_at(&self, value: f64) -> Result<SpectralResidual, ContinuationError> {
        let base = self.base_potential.with_param(self.swept, value)?;
        Ok(balance_residual(&base, &self.solved, &self.grid, &self.solver))
    }
}

/// The balance residual for `free` parameters of `base`: `Im mu_1` for one
/// parameter, the symmetric-function conditions of the `k` lowest states for
/// `k` parameters.
pub fn balance_residual(
    base: &MultiWellPotential,
    free: &[Param],
    grid: &Grid,
    solver: &SolverOptions,
) -> SpectralResidual {
    let k = free.len();
    let condition = if k == 1 {
        BalanceCondition::GroundState
    } else {
        BalanceCondition::SymmetricFunctions
    };
    SpectralResidual::new(base.clone(), free.to_vec(), *grid, *solver, k.max(2), condition)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub swept_value: f64,
    pub seed: Vec<f64>,
    pub solution: Vec<f64>,
    pub energies: Vec<Complex64>,
    pub classification: Classification,
    pub residual_norm: f64,
    pub converged: bool,
    /// Converged onto the Hermitian solution of the symmetric-function
    /// conditions instead of a gain-loss branch.
    pub trivial: bool,
    pub failure: Option<String>,
}

impl SweepRecord {
    fn failed(value: f64, seed: Vec<f64>, failure: String) -> Self {
        Self {
            swept_value: value,
            solution: seed.clone(),
            seed,
            energies: Vec::new(),
            classification: classify(&[], DEFAULT_TOLERANCE),
            residual_norm: f64::INFINITY,
            converged: false,
            trivial: false,
            failure: Some(failure),
        }
    }
}

/// Solves one point from `seed` and packages the result.
pub fn solve_point(
    residual: &SpectralResidual,
    seed: &[f64],
    root: &RootOptions,
    swept_value: f64,
) -> SweepRecord {
    let result = solve_hybrid(&RootProblem::with_options(residual.clone(), seed.to_vec(), root));
    let spectrum = match residual.spectrum_at(&result.solution) {
        Ok(s) => s,
        Err(e) => return SweepRecord::failed(swept_value, seed.to_vec(), e),
    };
    let energies = spectrum.energies();
    let gains_only = residual.free.iter().all(|p| matches!(p, Param::GainLoss(_)));
    let trivial = result.converged
        && gains_only
        && residual.free.len() > 1
        && max_abs(&result.solution) < TRIVIAL_LIMIT
        && max_abs(seed) >= TRIVIAL_LIMIT;
    SweepRecord {
        swept_value,
        seed: seed.to_vec(),
        classification: classify(&energies, DEFAULT_TOLERANCE),
        energies,
        residual_norm: result.residual_norm,
        converged: result.converged,
        trivial,
        failure: result.failure_reason.map(|r| r.to_string()),
        solution: result.solution,
    }
}

fn matrix_model_seed(spec: &SweepSpec, value: f64) -> Result<Vec<f64>, ContinuationError> {
    let p = spec.base_potential.with_param(spec.swept, value)?;
    Ok(seed_from_matrix_model(&p, &spec.grid, &spec.solved, spec.j_mode)?.values)
}

/// Solves the balance problem for every swept value.
///
/// With `SeedMode::MatrixModel` points are independent and solved in
/// parallel. Otherwise the sweep starts at `start_at`, then walks outward,
/// each point seeded by secant extrapolation from the previous ones. Steps
/// longer than `max_step` are subdivided; failed or trivial sub-steps are
/// halved down to `max_step / 64`.
pub fn sweep_line(spec: &SweepSpec) -> Result<Vec<SweepRecord>, ContinuationError> {
    spec.validate()?;
    if spec.seed_mode == SeedMode::MatrixModel {
        return Ok(spec
            .values
            .par_iter()
            .map(|&v| match (matrix_model_seed(spec, v), spec.residual_at(v)) {
                (Ok(seed), Ok(res)) => solve_point(&res, &seed, &spec.root, v),
                (Err(e), _) | (_, Err(e)) => SweepRecord::failed(v, Vec::new(), e.to_string()),
            })
            .collect());
    }

    let start_index = match spec.start_at {
        Some(s) => spec
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0),
        None => 0,
    };
    let start_value = spec.values[start_index];
    let seed = match &spec.seed_mode {
        SeedMode::Explicit(v) => v.clone(),
        _ => matrix_model_seed(spec, start_value)?,
    };
    let start = solve_point(&spec.residual_at(start_value)?, &seed, &spec.root, start_value);
    let mut records: Vec<Option<SweepRecord>> = vec![None; spec.values.len()];
    let forward: Vec<usize> = (start_index + 1..spec.values.len()).collect();
    let backward: Vec<usize> = (0..start_index).rev().collect();
    for path in [forward, backward] {
        let mut walker = Walker::new(spec, &start);
        for i in path {
            records[i] = Some(walker.advance_to(spec.values[i])?);
        }
    }
    records[start_index] = Some(start);
    Ok(records.into_iter().map(|r| r.expect("every value visited")).collect())
}

/// Secant-predictor continuation along the swept parameter.
struct Walker<'a> {
    spec: &'a SweepSpec,
    /// Accepted `(value, solution)` pairs, most recent last.
    history: Vec<(f64, Vec<f64>)>,
    step_root: RootOptions,
}

impl<'a> Walker<'a> {
    fn new(spec: &'a SweepSpec, start: &SweepRecord) -> Self {
        let history = if start.converged && !start.trivial {
            vec![(start.swept_value, start.solution.clone())]
        } else {
            vec![(start.swept_value, start.seed.clone())]
        };
        let step_root = step_options(&spec.root, spec.solved.len());
        Self {
            spec,
            history,
            step_root,
        }
    }

    fn predict(&self, value: f64) -> Vec<f64> {
        let (s1, x1) = self.history.last().expect("history is never empty");
        match self.history.len() {
            1 => x1.clone(),
            n => {
                let (s0, x0) = &self.history[n - 2];
                let t = (value - s1) / (s1 - s0);
                x1.iter().zip(x0).map(|(a, b)| a + t * (a - b)).collect()
            }
        }
    }

    /// The balance conditions on gain-loss parameters alone are invariant
    /// under `Gamma -> -Gamma`; a step landing on the mirror image has
    /// crossed the trivial root and is rejected.
    fn mirrored(&self, x: &[f64]) -> bool {
        let gains_only = self.spec.solved.iter().all(|p| matches!(p, Param::GainLoss(_)));
        let (_, last) = self.history.last().expect("history is never empty");
        gains_only && self.spec.solved.len() > 1 && x.iter().zip(last).map(|(a, b)| a * b).sum::<f64>() < 0.0
    }

    fn advance_to(&mut self, target: f64) -> Result<SweepRecord, ContinuationError> {
        let max_step = self.spec.max_step.unwrap_or(f64::INFINITY);
        let min_step = if max_step.is_finite() { max_step / 64.0 } else { 0.0 };
        let mut step = max_step;
        loop {
            let here = self.history.last().expect("history is never empty").0;
            let remaining = target - here;
            // Snap to the target rather than leave a sliver of a step.
            let s = if remaining.abs() <= step * (1.0 + 1e-6) {
                target
            } else {
                here + step.copysign(remaining)
            };
            let guess = self.predict(s);
            let record = solve_point(&self.spec.residual_at(s)?, &guess, &self.step_root, s);
            let ok = record.converged && !record.trivial && !self.mirrored(&record.solution);
            log::debug!(
                "continuation {here} -> {s}: guess {guess:?} solution {:?} converged {} trivial {}",
                record.solution,
                record.converged,
                record.trivial
            );
            if ok {
                if (s - here).abs() <= 1e-9 * (1.0 + s.abs()) {
                    self.history.pop();
                }
                self.history.push((s, record.solution.clone()));
                if self.history.len() > 2 {
                    self.history.remove(0);
                }
                if s == target {
                    return Ok(record);
                }
                step = (step * 1.5).min(max_step);
            } else if step > min_step && step.is_finite() {
                step *= 0.5;
            } else if s == target {
                return Ok(record);
            } else {
                // Give up on the intermediate point and try the target itself.
                let guess = self.predict(target);
                return Ok(solve_point(&self.spec.residual_at(target)?, &guess, &self.spec.root, target));
            }
        }
    }
}

/// One lattice point of a `(Gamma_1, Gamma_2)` scan solved for `V_2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRecord {
    pub gamma1: f64,
    pub gamma2: f64,
    pub depth2: f64,
    /// `V_2 - V_1`.
    pub delta_v: f64,
    pub mu1: Complex64,
    pub mu2: Complex64,
    pub converged: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    /// Two-well potential; its `V_2` is the fallback seed.
    pub base_potential: MultiWellPotential,
    pub gamma1_values: Vec<f64>,
    pub gamma2_values: Vec<f64>,
    pub grid: Grid,
    pub solver: SolverOptions,
    pub root: RootOptions,
    pub j_mode: JMode,
}

/// Row-major scan (rows `Gamma_2`, columns `Gamma_1`) solving `Im mu_1 = 0`
/// for `V_2`.
///
/// Each point is seeded from the nearest converged point of the rows already
/// done, then from the matrix model, then from the base depth. Points of a
/// row are independent and solved in parallel; the result does not depend on
/// the number of threads.
pub fn grid_scan(spec: &ScanSpec) -> Result<Vec<Vec<ScanRecord>>, ContinuationError> {
    if spec.base_potential.len() != 2 {
        return Err(ContinuationError::InvalidSpec("a lattice scan needs a two-well potential".into()));
    }
    if spec.gamma1_values.is_empty() || spec.gamma2_values.is_empty() {
        return Err(ContinuationError::InvalidSpec("empty lattice".into()));
    }
    let base_v2 = spec.base_potential.wells()[1].depth;
    let v1 = spec.base_potential.wells()[0].depth;
    let mut rows: Vec<Vec<ScanRecord>> = Vec::with_capacity(spec.gamma2_values.len());
    for &g2 in &spec.gamma2_values {
        let done: Vec<&ScanRecord> = rows.iter().flatten().filter(|r| r.converged).collect();
        let row: Vec<ScanRecord> = spec
            .gamma1_values
            .par_iter()
            .map(|&g1| scan_point(spec, g1, g2, base_v2, v1, &done))
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

fn scan_point(spec: &ScanSpec, g1: f64, g2: f64, base_v2: f64, v1: f64, done: &[&ScanRecord]) -> ScanRecord {
    let potential = match spec
        .base_potential
        .with_params(&[Param::GainLoss(0), Param::GainLoss(1)], &[g1, g2])
    {
        Ok(p) => p,
        Err(e) => return scan_failure(g1, g2, base_v2, v1, e.to_string()),
    };
    let residual = balance_residual(&potential, &[Param::Depth(1)], &spec.grid, &spec.solver);
    if g1 == 0.0 && g2 == 0.0 {
        // Hermitian corner: every depth balances; keep the base one.
        return match residual.spectrum_at(&[base_v2]) {
            Ok(s) => {
                let e = s.energies();
                ScanRecord {
                    gamma1: g1,
                    gamma2: g2,
                    depth2: base_v2,
                    delta_v: base_v2 - v1,
                    mu1: e[0],
                    mu2: e[1],
                    converged: true,
                    failure: None,
                }
            }
            Err(e) => scan_failure(g1, g2, base_v2, v1, e),
        };
    }
    let mut seeds: Vec<f64> = Vec::new();
    if let Some(nearest) = done.iter().min_by(|a, b| {
        let da = (a.gamma1 - g1).hypot(a.gamma2 - g2);
        let db = (b.gamma1 - g1).hypot(b.gamma2 - g2);
        da.total_cmp(&db)
            .then(a.gamma2.total_cmp(&b.gamma2))
            .then(a.gamma1.total_cmp(&b.gamma1))
    }) {
        seeds.push(nearest.depth2);
    }
    if let Ok(seed) = seed_from_matrix_model(&potential, &spec.grid, &[Param::Depth(1)], spec.j_mode) {
        seeds.push(seed.values[0]);
    }
    seeds.push(base_v2);
    seeds.dedup();
    let mut last_failure = String::from("no seed");
    for seed in seeds {
        let record = solve_point(&residual, &[seed], &spec.root, g1);
        if record.converged {
            let v2 = record.solution[0];
            return ScanRecord {
                gamma1: g1,
                gamma2: g2,
                depth2: v2,
                delta_v: v2 - v1,
                mu1: record.energies[0],
                mu2: record.energies[1],
                converged: true,
                failure: None,
            };
        }
        last_failure = record.failure.unwrap_or_default();
    }
    scan_failure(g1, g2, f64::NAN, v1, last_failure)
}

fn scan_failure(g1: f64, g2: f64, v2: f64, v1: f64, failure: String) -> ScanRecord {
    let nan = Complex64::new(f64::NAN, f64::NAN);
    ScanRecord {
        gamma1: g1,
        gamma2: g2,
        depth2: v2,
        delta_v: v2 - v1,
        mu1: nan,
        mu2: nan,
        converged: false,
        failure: Some(failure),
    }
}

/// Why a boundary ray stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The root search failed at the smallest step.
    RootFailure,
    /// The gain-loss parameters shrank to zero (they turn imaginary beyond).
    GainLossImaginary,
    /// The matrix model lost the required on-site ordering.
    ModelInfeasible,
    /// Gain-loss parameters exceeded the configured cap.
    GainLossDiverged,
    /// The ray reached the maximum radius.
    RadiusLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub angle: f64,
    pub radius: f64,
    pub v1: f64,
    pub v3: f64,
    pub reason: StopReason,
    /// Gain-loss parameters at the last feasible point of the ray.
    pub gain_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    /// Three-well potential; its `(V_1, V_3)` is the start point and `V_2`
    /// stays fixed.
    pub base_potential: MultiWellPotential,
    /// Gain-loss parameters to start from; seeded from the matrix model
    /// when absent.
    pub start_gain_loss: Option<Vec<f64>>,
    pub rays: usize,
    pub max_radius: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub gain_loss_cap: f64,
    pub grid: Grid,
    pub solver: SolverOptions,
    pub root: RootOptions,
    pub j_mode: JMode,
}

impl BoundarySpec {
    pub fn new(base_potential: MultiWellPotential, grid: Grid) -> Self {
        Self {
            base_potential,
            start_gain_loss: None,
            rays: 16,
            max_radius: 1.5,
            initial_step: 0.02,
            min_step: 1e-3,
            max_step: 0.05,
            gain_loss_cap: 2.0,
            grid,
            solver: SolverOptions::default(),
            root: RootOptions::default(),
            j_mode: JMode::default(),
        }
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.rays)
            .map(|k| std::f64::consts::TAU * k as f64 / self.rays as f64)
            .collect()
    }

    fn validate(&self) -> Result<(), ContinuationError> {
        if self.base_potential.len() != 3 {
            return Err(ContinuationError::InvalidSpec("boundary tracing needs a three-well potential".into()));
        }
        if self.rays < 3 {
            return Err(ContinuationError::InvalidSpec("at least three rays are needed".into()));
        }
        if !(self.min_step > 0.0 && self.min_step <= self.initial_step && self.initial_step <= self.max_step) {
            return Err(ContinuationError::InvalidSpec("steps must satisfy 0 < min <= initial <= max".into()));
        }
        if !(self.max_radius > 0.0 && self.gain_loss_cap > 0.0) {
            return Err(ContinuationError::InvalidSpec("max_radius and gain_loss_cap must be positive".into()));
        }
        Ok(())
    }

    fn point(&self, angle: f64, radius: f64) -> (f64, f64) {
        let w = self.base_potential.wells();
        (w[0].depth + radius * angle.cos(), w[2].depth + radius * angle.sin())
    }

    fn potential_at(&self, angle: f64, radius: f64) -> Result<MultiWellPotential, PotentialError> {
        let (v1, v3) = self.point(angle, radius);
        self.base_potential
            .with_params(&[Param::Depth(0), Param::Depth(2)], &[v1, v3])
    }
}

/// Marches outward from the start point along `spec.rays` rays in the
/// `(V_1, V_3)` plane, continuing the balanced gain-loss parameters, and
/// returns the last feasible point of every ray (ordered by angle).
///
/// Where the parameters shrink towards zero before the search fails, the
/// boundary is placed where `|Gamma|^2`, extrapolated linearly, vanishes.
pub fn trace_feasibility_boundary(spec: &BoundarySpec) -> Result<Vec<BoundaryPoint>, ContinuationError> {
    spec.validate()?;
    let gains: Vec<Param> = (0..3).map(Param::GainLoss).collect();
    let start_seed = match &spec.start_gain_loss {
        Some(v) => v.clone(),
        None => seed_from_matrix_model(&spec.base_potential, &spec.grid, &gains, spec.j_mode)?.values,
    };
    let start_residual = balance_residual(&spec.base_potential, &gains, &spec.grid, &spec.solver);
    let start = solve_point(&start_residual, &start_seed, &spec.root, 0.0);
    if !start.converged || start.trivial {
        return Err(ContinuationError::StartFailed(
            start.failure.unwrap_or_else(|| "converged to the trivial solution".into()),
        ));
    }
    spec.angles()
        .into_par_iter()
        .map(|angle| trace_ray(spec, angle, &start.solution))
        .collect()
}

fn trace_ray(spec: &BoundarySpec, angle: f64, start: &[f64]) -> Result<BoundaryPoint, ContinuationError> {
    let gains: Vec<Param> = (0..3).map(Param::GainLoss).collect();
    let mut history: Vec<(f64, Vec<f64>)> = vec![(0.0, start.to_vec())];
    let mut step = spec.initial_step;
    let root = step_options(&spec.root, 3);
    let reason = loop {
        let (s, x) = history.last().expect("history is never empty").clone();
        if s >= spec.max_radius {
            break StopReason::RadiusLimit;
        }
        let s_try = (s + step).min(spec.max_radius);
        let guess = match history.len() {
            1 => x.clone(),
            n => {
                let (s0, x0) = &history[n - 2];
                let t = (s_try - s) / (s - s0);
                x.iter().zip(x0).map(|(a, b)| a + t * (a - b)).collect()
            }
        };
        let residual = balance_residual(&spec.potential_at(angle, s_try)?, &gains, &spec.grid, &spec.solver);
        let record = solve_point(&residual, &guess, &root, s_try);
        let jump = norm(
            &record
                .solution
                .iter()
                .zip(&guess)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        let diverged = record.converged && max_abs(&record.solution) > spec.gain_loss_cap;
        let ok = record.converged && !record.trivial && !diverged && jump <= 0.25 * norm(&x) + 0.02;
        if ok {
            history.push((s_try, record.solution));
            if history.len() > 3 {
                history.remove(0);
            }
            step = (step * 1.5).min(spec.max_step);
            continue;
        }
        if step > spec.min_step {
            step = (step * 0.5).max(spec.min_step);
            continue;
        }
        break if diverged {
            StopReason::GainLossDiverged
        } else if record.trivial || shrinking(&history) {
            StopReason::GainLossImaginary
        } else {
            StopReason::RootFailure
        };
    };
    let (s_last, x_last) = history.last().expect("history is never empty").clone();
    let mut radius = s_last;
    if reason == StopReason::GainLossImaginary && history.len() >= 2 {
        let (s0, x0) = &history[history.len() - 2];
        let (q0, q1) = (norm(x0).powi(2), norm(&x_last).powi(2));
        if q1 < q0 {
            let extra = q1 * (s_last - s0) / (q0 - q1);
            radius = s_last + extra.min(2.0 * spec.min_step.max(step));
        }
    }
    let (v1, v3) = spec.point(angle, radius);
    Ok(BoundaryPoint {
        angle,
        radius,
        v1,
        v3,
        reason,
        gain_loss: x_last,
    })
}

fn shrinking(history: &[(f64, Vec<f64>)]) -> bool {
    match history {
        [.., (_, a), (_, b)] => norm(b) < norm(a),
        _ => false,
    }
}

/// The same trace on the matrix model alone: along each ray, the largest
/// radius up to which the closed-form balanced gains stay real, ordered
/// and below the cap (located to `spec.min_step / 10` by bisection).
pub fn trace_model_boundary(spec: &BoundarySpec) -> Result<Vec<BoundaryPoint>, ContinuationError> {
    spec.validate()?;
    let status = |angle: f64, radius: f64| -> Result<Result<Vec<f64>, StopReason>, ContinuationError> {
        model_status(spec, &spec.potential_at(angle, radius)?)
    };
    if let Err(reason) = status(0.0, 0.0)? {
        return Err(ContinuationError::StartFailed(format!("matrix model infeasible at the start point ({reason:?})")));
    }
    spec.angles()
        .into_par_iter()
        .map(|angle| {
            let mut s = 0.0;
            let mut last = status(angle, 0.0)?.expect("start checked");
            let reason = loop {
                if s >= spec.max_radius {
                    break StopReason::RadiusLimit;
                }
                let s_try = (s + spec.initial_step).min(spec.max_radius);
                match status(angle, s_try)? {
                    Ok(g) => {
                        s = s_try;
                        last = g;
                    }
                    Err(reason) => {
                        let (mut a, mut b) = (s, s_try);
                        while b - a > spec.min_step / 10.0 {
                            let m = 0.5 * (a + b);
                            match status(angle, m)? {
                                Ok(g) => {
                                    a = m;
                                    last = g;
                                }
                                Err(_) => b = m,
                            }
                        }
                        s = a;
                        break reason;
                    }
                }
            };
            let (v1, v3) = spec.point(angle, s);
            Ok(BoundaryPoint {
                angle,
                radius: s,
                v1,
                v3,
                reason,
                gain_loss: last,
            })
        })
        .collect()
}

fn model_status(spec: &BoundarySpec, potential: &MultiWellPotential) -> Result<Result<Vec<f64>, StopReason>, ContinuationError> {
    let basis = build_basis(&potential.real_part(), &spec.grid)?;
    let model = orthogonalize(&assemble(&basis, &potential.real_part())?)?;
    let j = match spec.j_mode {
        JMode::Fixed(v) => v,
        _ => model.j.expect("three wells have a coupling"),
    };
    let eps = [model.epsilon[0], model.epsilon[1], model.epsilon[2]];
    let gamma = match balanced_gamma_closed_form(eps, j) {
        BalancedGamma::Real(a, b) => match [a, b].into_iter().find(|g| three_well_admissible(eps, *g)) {
            Some(g) => g,
            None => return Ok(Err(StopReason::ModelInfeasible)),
        },
        BalancedGamma::Imaginary { .. } => return Ok(Err(StopReason::GainLossImaginary)),
        BalancedGamma::Degenerate => return Ok(Err(StopReason::ModelInfeasible)),
    };
    let response = GainLossResponse::new(&basis, potential)?;
    let gains: Vec<f64> = (0..3).map(|n| gamma[n] / response.per_well[n][(n, n)]).collect();
    if max_abs(&gains) > spec.gain_loss_cap {
        return Ok(Err(StopReason::GainLossDiverged));
    }
    Ok(Ok(gains))
}

/// Area overlap (intersection over union) of two star-shaped regions given
/// by boundary radii along the same rays.
pub fn jaccard(a: &[BoundaryPoint], b: &[BoundaryPoint]) -> f64 {
    let (mut inter, mut union) = (0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        debug_assert!((p.angle - q.angle).abs() < 1e-12);
        let (r1, r2) = (p.radius, q.radius);
        inter += r1.min(r2).powi(2);
        union += r1.max(r2).powi(2);
    }
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_solver::{balance_check, solve_lowest};
    use crate::potential::GaussianWell;

    fn double_well(v2: f64, g1: f64, g2: f64) -> MultiWellPotential {
        MultiWellPotential::new(vec![
            GaussianWell::new(-3.0, g1, 1.0, -1.5),
            GaussianWell::new(v2, g2, 1.0, 1.5),
        ])
        .unwrap()
    }

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 1001).unwrap()
    }

    #[test]
    fn pt_seed_is_exact() {
        let p = double_well(-3.0, 0.15, 0.0);
        let seed = seed_from_matrix_model(&p, &grid(), &[Param::GainLoss(1)], JMode::Frozen).unwrap();
        assert!((seed.values[0] + 0.15).abs() < 1e-12, "{}", seed.values[0]);
    }

    #[test]
    fn same_sign_gains_are_infeasible() {
        let p = double_well(-3.2, 0.2, 0.1);
        let r = seed_from_matrix_model(&p, &grid(), &[Param::Depth(1)], JMode::Frozen);
        assert!(matches!(r, Err(ContinuationError::Infeasible(_))), "{r:?}");
    }

    #[test]
    fn two_well_seed_is_close_to_root() {
        let p = double_well(-3.2, 0.2, 0.0);
        let g = grid();
        let seed = seed_from_matrix_model(&p, &g, &[Param::GainLoss(1)], JMode::Recomputed).unwrap();
        let res = balance_residual(&p, &[Param::GainLoss(1)], &g, &SolverOptions::default());
        let rec = solve_point(&res, &seed.values, &RootOptions::default(), 0.2);
        assert!(rec.converged);
        assert!((seed.values[0] - rec.solution[0]).abs() < 0.3 * rec.solution[0].abs());
    }

    #[test]
    fn pt_line_sweep_stays_on_diagonal() {
        let spec = SweepSpec {
            base_potential: double_well(-3.0, 0.0, 0.0),
            swept: Param::GainLoss(0),
            values: vec![0.05, 0.1, 0.15],
            solved: vec![Param::GainLoss(1)],
            seed_mode: SeedMode::PreviousPoint,
            grid: grid(),
            solver: SolverOptions::default(),
            root: RootOptions::default(),
            j_mode: JMode::Frozen,
            start_at: None,
            max_step: None,
        };
        let recs = sweep_line(&spec).unwrap();
        for r in &recs {
            assert!(r.converged);
            assert!((r.solution[0] + r.swept_value).abs() < 1e-7, "{r:?}");
            // Balanced real states carry no net gain.
            let p = spec.base_potential.with_params(&[Param::GainLoss(0), Param::GainLoss(1)], &[r.swept_value, r.solution[0]]).unwrap();
            let s = solve_lowest(&p, &spec.grid, 2, &spec.solver).unwrap();
            for &i in &r.classification.real_indices {
                assert!(balance_check(&s.pairs()[i], &p, &spec.grid).1.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sweep_direction_does_not_matter() {
        let mut spec = SweepSpec {
            base_potential: double_well(-3.2, 0.0, 0.0),
            swept: Param::GainLoss(0),
            values: vec![0.1, 0.2, 0.3],
            solved: vec![Param::GainLoss(1)],
            seed_mode: SeedMode::Explicit(vec![-0.05]),
            grid: grid(),
            solver: SolverOptions::default(),
            root: RootOptions::default(),
            j_mode: JMode::Frozen,
            start_at: Some(0.1),
            max_step: Some(0.05),
        };
        let a = sweep_line(&spec).unwrap();
        spec.values.reverse();
        let b = sweep_line(&spec).unwrap();
        for (x, y) in a.iter().zip(b.iter().rev()) {
            assert!(x.converged && y.converged);
            assert!((x.solution[0] - y.solution[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_sweeps_are_rejected() {
        let spec = SweepSpec {
            base_potential: double_well(-3.2, 0.0, 0.0),
            swept: Param::GainLoss(0),
            values: vec![],
            solved: vec![Param::GainLoss(1)],
            seed_mode: SeedMode::PreviousPoint,
            grid: grid(),
            solver: SolverOptions::default(),
            root: RootOptions::default(),
            j_mode: JMode::Frozen,
            start_at: None,
            max_step: None,
        };
        assert!(matches!(sweep_line(&spec), Err(ContinuationError::InvalidSpec(_))));
        let spec = SweepSpec {
            values: vec![0.1, 0.3, 0.2],
            ..spec
        };
        assert!(matches!(sweep_line(&spec), Err(ContinuationError::InvalidSpec(_))));
    }

    #[test]
    fn jaccard_of_circles() {
        let pts = |r: f64| -> Vec<BoundaryPoint> {
            (0..8)
                .map(|k| BoundaryPoint {
                    angle: k as f64,
                    radius: r,
                    v1: 0.0,
                    v3: 0.0,
                    reason: StopReason::RadiusLimit,
                    gain_loss: vec![],
                })
                .collect()
        };
        assert!((jaccard(&pts(1.0), &pts(1.0)) - 1.0).abs() < 1e-15);
        assert!((jaccard(&pts(1.0), &pts(2.0)) - 0.25).abs() < 1e-15);
    }
}
