//! Run configuration: one JSON file per experiment, validated before any
//! computation and echoed back fully resolved in every artifact.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::continuation::SeedMode;
use crate::grid::{Grid, DEFAULT_POINTS};
use crate::grid_solver::SolverOptions;
use crate::matrix_model::JMode;
use crate::potential::{GaussianWell, MultiWellPotential, Param};
use crate::rootfind::RootOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    MatrixModel,
    Balance,
    Sweep,
    Scan,
    Boundary,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::MatrixModel => "matrix-model",
            Command::Balance => "balance",
            Command::Sweep => "sweep",
            Command::Scan => "scan",
            Command::Boundary => "boundary",
        }
    }
}

/// The file as written by the user.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: Vec<GaussianWell>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub task: Value,
}

/// `"auto"` or `{x_min, x_max, n_points}` with `n_points` a count or
/// `"auto"`; missing extents are taken from the potential.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum GridSpec {
    #[default]
    Auto,
    Explicit {
        x_min: Option<f64>,
        x_max: Option<f64>,
        n_points: Option<usize>,
    },
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            x_min: Option<f64>,
            x_max: Option<f64>,
            #[serde(default)]
            n_points: Option<Value>,
        }
        match Value::deserialize(deserializer)? {
            Value::String(s) if s == "auto" => Ok(GridSpec::Auto),
            v @ Value::Object(_) => {
                let raw: Raw = serde_json::from_value(v).map_err(|e| D::Error::custom(format!("grid: {e}")))?;
                let n_points = match raw.n_points {
                    None => None,
                    Some(Value::String(s)) if s == "auto" => None,
                    Some(v) => Some(
                        v.as_u64()
                            .ok_or_else(|| D::Error::custom("grid.n_points must be a positive integer or \"auto\""))?
                            as usize,
                    ),
                };
                Ok(GridSpec::Explicit {
                    x_min: raw.x_min,
                    x_max: raw.x_max,
                    n_points,
                })
            }
            _ => Err(D::Error::custom("grid must be \"auto\" or an object")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JModeSpec {
    Recomputed,
    #[default]
    Frozen,
    Fixed(f64),
}

impl From<JModeSpec> for JMode {
    fn from(m: JModeSpec) -> Self {
        match m {
            JModeSpec::Recomputed => JMode::Recomputed,
            JModeSpec::Frozen => JMode::Frozen,
            JModeSpec::Fixed(v) => JMode::Fixed(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    /// States reported; defaults to the number of wells.
    pub states: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub extra_states: usize,
    pub min_step: f64,
    pub root: RootOptions,
    pub j_mode: JModeSpec,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            states: None,
            tol: o.tol,
            max_iter: o.max_iter,
            extra_states: o.extra_states,
            min_step: o.min_step,
            root: RootOptions::default(),
            j_mode: JModeSpec::default(),
        }
    }
}

impl SolverSpec {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            extra_states: self.extra_states,
            min_step: self.min_step,
        }
    }
}

/// A list of values, or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ValuesSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl ValuesSpec {
    pub fn resolve(&self, field: &str) -> Result<Vec<f64>, ConfigError> {
        match *self {
            ValuesSpec::List(ref v) => Ok(v.clone()),
            ValuesSpec::Range { start, stop, step } => {
                if !(step.is_finite() && step != 0.0 && start.is_finite() && stop.is_finite()) {
                    return invalid(format!("{field}: range needs finite start, stop and a nonzero step"));
                }
                let n = ((stop - start) / step + 1e-9).floor();
                if n < 0.0 {
                    return invalid(format!("{field}: step points away from stop"));
                }
                if n > 1e6 {
                    return invalid(format!("{field}: range has too many points"));
                }
                // Rounded to 12 decimals so 0.1 * 3 prints as 0.3.
                Ok((0..=n as usize)
                    .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EmptyTask {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceTask {
    /// Parameters solved for; two wells default to `gain_loss:2`, three
    /// wells to all gain-loss terms.
    pub free: Option<Vec<Param>>,
    /// Initial guess; taken from the matrix model when absent.
    pub seed: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweepTask {
    swept: Param,
    values: ValuesSpec,
    solved: Option<Vec<Param>>,
    #[serde(default = "default_seed_mode")]
    seed_mode: SeedMode,
    start_at: Option<f64>,
    max_step: Option<f64>,
}

fn default_seed_mode() -> SeedMode {
    SeedMode::PreviousPoint
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTask {
    pub swept: Param,
    pub values: Vec<f64>,
    pub solved: Vec<Param>,
    pub seed_mode: SeedMode,
    pub start_at: Option<f64>,
    pub max_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScanTask {
    gamma1: ValuesSpec,
    gamma2: ValuesSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanTask {
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryTask {
    pub rays: usize,
    pub max_radius: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub gain_loss_cap: f64,
    pub start_gain_loss: Option<Vec<f64>>,
    /// Also trace the matrix-model boundary and report the overlap.
    pub model: bool,
}

impl Default for BoundaryTask {
    fn default() -> Self {
        Self {
            rays: 16,
            max_radius: 1.5,
            initial_step: 0.02,
            min_step: 1e-3,
            max_step: 0.05,
            gain_loss_cap: 2.0,
            start_gain_loss: None,
            model: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Task {
    Empty(EmptyTask),
    Balance(BalanceTask),
    Sweep(SweepTask),
    Scan(ScanTask),
    Boundary(BoundaryTask),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

/// Everything a run depends on, with every default filled in. Feeding its
/// JSON back as a config reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub potential: Vec<GaussianWell>,
    pub grid: ResolvedGrid,
    pub solver: SolverSpec,
    pub task: Task,
}

impl ResolvedConfig {
    pub fn potential(&self) -> MultiWellPotential {
        MultiWellPotential::new(self.potential.clone()).expect("validated on resolution")
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid.x_min, self.grid.x_max, self.grid.n_points).expect("validated on resolution")
    }

    pub fn states(&self) -> usize {
        self.solver.states.expect("resolved")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    Ok(serde_json::from_str(text)?)
}

fn task_of<T: serde::de::DeserializeOwned + Default>(task: &Value) -> Result<T, ConfigError> {
    match task {
        Value::Null => Ok(T::default()),
        v => serde_json::from_value(v.clone()).map_err(|e| ConfigError::Invalid(format!("task: {e}"))),
    }
}

fn required_task<T: serde::de::DeserializeOwned>(task: &Value, command: Command) -> Result<T, ConfigError> {
    if task.is_null() {
        return invalid(format!("{} needs a task section", command.name()));
    }
    serde_json::from_value(task.clone()).map_err(|e| ConfigError::Invalid(format!("task: {e}")))
}

fn check_params(params: &[Param], potential: &MultiWellPotential, field: &str) -> Result<(), ConfigError> {
    for (i, p) in params.iter().enumerate() {
        if potential.param(*p).is_err() {
            return invalid(format!("{field}: {p} refers to a well the potential does not have"));
        }
        if params[..i].contains(p) {
            return invalid(format!("{field}: {p} listed twice"));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn resolve(&self, command: Command) -> Result<ResolvedConfig, ConfigError> {
        let potential =
            MultiWellPotential::new(self.potential.clone()).map_err(|e| ConfigError::Invalid(format!("potential: {e}")))?;
        let n = potential.len();
        let half = potential.default_half_width();
        let (x_min, x_max, n_points) = match self.grid {
            GridSpec::Auto => (-half, half, DEFAULT_POINTS),
            GridSpec::Explicit { x_min, x_max, n_points } => (
                x_min.unwrap_or(-half),
                x_max.unwrap_or(half),
                n_points.unwrap_or(DEFAULT_POINTS),
            ),
        };
        Grid::new(x_min, x_max, n_points).map_err(|e| ConfigError::Invalid(format!("grid: {e}")))?;

        let mut solver = self.solver.clone();
        let states = solver.states.unwrap_or(n);
        if states == 0 {
            return invalid("solver.states must be at least 1");
        }
        if !(solver.tol > 0.0) || !(solver.min_step > 0.0 && solver.min_step < 1.0) || solver.max_iter == 0 {
            return invalid("solver: tol and min_step must be positive (min_step < 1), max_iter at least 1");
        }
        if !(solver.root.f_tol > 0.0 && solver.root.x_tol > 0.0 && solver.root.fd_step > 0.0) {
            return invalid("solver.root: tolerances and fd_step must be positive");
        }
        if let JModeSpec::Fixed(j) = solver.j_mode {
            if !(j.is_finite() && j > 0.0) {
                return invalid("solver.j_mode.fixed must be positive");
            }
        }
        solver.states = Some(states);

        let task = match command {
            Command::Spectrum | Command::MatrixModel => Task::Empty(task_of::<EmptyTask>(&self.task)?),
            Command::Balance => Task::Balance(resolve_balance(task_of(&self.task)?, &potential)?),
            Command::Sweep => Task::Sweep(resolve_sweep(required_task(&self.task, command)?, &potential)?),
            Command::Scan => {
                let raw: RawScanTask = required_task(&self.task, command)?;
                if n != 2 {
                    return invalid("scan needs a two-well potential");
                }
                let gamma1 = raw.gamma1.resolve("task.gamma1")?;
                let gamma2 = raw.gamma2.resolve("task.gamma2")?;
                if gamma1.is_empty() || gamma2.is_empty() {
                    return invalid("task: scan lattice is empty");
                }
                Task::Scan(ScanTask { gamma1, gamma2 })
            }
            Command::Boundary => {
                let t: BoundaryTask = task_of(&self.task)?;
                if n != 3 {
                    return invalid("boundary needs a three-well potential");
                }
                if t.rays < 3 {
                    return invalid("task.rays must be at least 3");
                }
                if !(t.min_step > 0.0 && t.min_step <= t.initial_step && t.initial_step <= t.max_step) {
                    return invalid("task: steps must satisfy 0 < min_step <= initial_step <= max_step");
                }
                if !(t.max_radius > 0.0 && t.gain_loss_cap > 0.0) {
                    return invalid("task: max_radius and gain_loss_cap must be positive");
                }
                if t.start_gain_loss.as_ref().is_some_and(|v| v.len() != 3) {
                    return invalid("task.start_gain_loss needs three values");
                }
                Task::Boundary(t)
            }
        };
        Ok(ResolvedConfig {
            potential: self.potential.clone(),
            grid: ResolvedGrid { x_min, x_max, n_points },
            solver,
            task,
        })
    }
}

fn resolve_balance(mut t: BalanceTask, potential: &MultiWellPotential) -> Result<BalanceTask, ConfigError> {
    let n = potential.len();
    let free = match t.free.take() {
        Some(f) => f,
        None if n == 2 => vec![Param::GainLoss(1)],
        None if n == 3 => (0..3).map(Param::GainLoss).collect(),
        None => return invalid("task.free is required unless the potential has two or three wells"),
    };
    if free.is_empty() || free.len() > n {
        return invalid(format!("task.free: {} parameters for {n} wells", free.len()));
    }
    check_params(&free, potential, "task.free")?;
    match &t.seed {
        Some(s) if s.len() != free.len() => {
            return invalid(format!("task.seed has {} values for {} free parameters", s.len(), free.len()));
        }
        None if !(n == 2 && free.len() == 1 || n == 3 && free.len() == 3) => {
            return invalid("task.seed is required: the matrix model seeds two wells with one free parameter or three wells with three");
        }
        _ => {}
    }
    t.free = Some(free);
    Ok(t)
}

fn resolve_sweep(raw: RawSweepTask, potential: &MultiWellPotential) -> Result<SweepTask, ConfigError> {
    let values = raw.values.resolve("task.values")?;
    if values.is_empty() {
        return invalid("task.values is empty");
    }
    let solved = match raw.solved {
        Some(s) => s,
        None if potential.len() == 2 => vec![Param::GainLoss(1)],
        None if potential.len() == 3 => (0..3).map(Param::GainLoss).collect(),
        None => return invalid("task.solved is required unless the potential has two or three wells"),
    };
    check_params(&[raw.swept], potential, "task.swept")?;
    check_params(&solved, potential, "task.solved")?;
    if solved.contains(&raw.swept) {
        return invalid(format!("task: {} is both swept and solved", raw.swept));
    }
    Ok(SweepTask {
        swept: raw.swept,
        values,
        solved,
        seed_mode: raw.seed_mode,
        start_at: raw.start_at,
        max_step: raw.max_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLE: &str = r#"{"potential": [
        {"depth": -3, "gain_loss": 0.2, "width": 1, "center": -1.5},
        {"depth": -3.2, "gain_loss": 0, "width": 1, "center": 1.5}]"#;

    fn cfg(rest: &str) -> RunConfig {
        parse(&format!("{DOUBLE}{rest}}}")).unwrap()
    }

    #[test]
    fn auto_grid_resolves() {
        let r = cfg("").resolve(Command::Spectrum).unwrap();
        assert_eq!(r.grid, ResolvedGrid { x_min: -9.5, x_max: 9.5, n_points: DEFAULT_POINTS });
        assert_eq!(r.states(), 2);
        let r = cfg(r#","grid": {"x_min": -12, "x_max": 12, "n_points": "auto"}"#).resolve(Command::Spectrum).unwrap();
        assert_eq!(r.grid.n_points, DEFAULT_POINTS);
        assert_eq!(r.grid.x_min, -12.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(&format!("{DOUBLE}, \"grids\": \"auto\"}}")).is_err());
        assert!(parse(&format!("{DOUBLE}, \"solver\": {{\"tolerance\": 1}}}}")).is_err());
        let c = cfg(r#","task": {"frees": ["gain_loss:2"]}"#);
        assert!(c.resolve(Command::Balance).is_err());
        let c = cfg(r#","task": {"anything": 1}"#);
        assert!(c.resolve(Command::Spectrum).is_err());
    }

    #[test]
    fn negative_width_names_the_field() {
        let text = r#"{"potential": [{"depth": -3, "gain_loss": 0, "width": -1, "center": 0}]}"#;
        let err = parse(text).unwrap().resolve(Command::Spectrum).unwrap_err().to_string();
        assert!(err.contains("width"), "{err}");
    }

    #[test]
    fn resolved_config_is_a_fixed_point() {
        let c = cfg(r#","task": {"swept": "gain_loss:1", "values": {"start": 0, "stop": 0.5, "step": 0.1}}"#);
        let r = c.resolve(Command::Sweep).unwrap();
        let Task::Sweep(t) = &r.task else { panic!() };
        assert_eq!(t.values, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(t.solved, vec![Param::GainLoss(1)]);
        let again = parse(&r.to_json()).unwrap().resolve(Command::Sweep).unwrap();
        assert_eq!(again, r);
        assert_eq!(again.sha256(), r.sha256());
        assert_eq!(r.sha256().len(), 64);
    }

    #[test]
    fn sweep_validation() {
        let c = cfg(r#","task": {"swept": "gain_loss:1", "values": []}"#);
        assert!(c.resolve(Command::Sweep).unwrap_err().to_string().contains("empty"));
        let c = cfg(r#","task": {"swept": "gain_loss:2", "values": [0.1]}"#);
        assert!(c.resolve(Command::Sweep).is_err());
        let c = cfg(r#","task": {"swept": "depth:3", "values": [0.1]}"#);
        assert!(c.resolve(Command::Sweep).is_err());
        assert!(cfg("").resolve(Command::Sweep).is_err());
    }

    #[test]
    fn balance_defaults() {
        let r = cfg("").resolve(Command::Balance).unwrap();
        let Task::Balance(t) = r.task else { panic!() };
        assert_eq!(t.free, Some(vec![Param::GainLoss(1)]));
        let c = cfg(r#","task": {"free": ["depth:2"], "seed": [1, 2]}"#);
        assert!(c.resolve(Command::Balance).is_err());
    }

    #[test]
    fn j_mode_forms() {
        for (text, want) in [
            (r#""frozen""#, JModeSpec::Frozen),
            (r#""recomputed""#, JModeSpec::Recomputed),
            (r#"{"fixed": 0.2}"#, JModeSpec::Fixed(0.2)),
        ] {
            let c = cfg(&format!(r#","solver": {{"j_mode": {text}}}"#));
            assert_eq!(c.resolve(Command::Spectrum).unwrap().solver.j_mode, want);
        }
    }
}
