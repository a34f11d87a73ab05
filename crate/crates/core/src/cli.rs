//! The `gainloss` command line: `gainloss <command> <config> [--out DIR]
//! [--jobs N] [-v]`.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numerical
//! failure, 3 infeasible matrix-model seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{self, Command, ConfigError, ResolvedConfig, Task};
use crate::continuation::{
    balance_residual, grid_scan, jaccard, seed_from_matrix_model, solve_point, sweep_line, trace_feasibility_boundary,
    trace_model_boundary, BoundaryPoint, BoundarySpec, ContinuationError, ScanSpec, SweepSpec,
};
use crate::grid_solver::{balance_check, solve_lowest};
use crate::matrix_model::{build_model, MatrixModelError};
use crate::symmetrization::{classify, Classification, DEFAULT_TOLERANCE};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gainloss", version, about = "Balanced gain and loss in complex multi-well potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for independent points (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Lowest states of the configured potential.
    Spectrum { config: PathBuf },
    /// Effective matrix model of the configured potential.
    MatrixModel { config: PathBuf },
    /// Solve for balanced gain and loss.
    Balance { config: PathBuf },
    /// Balanced solutions along a line in parameter space.
    Sweep { config: PathBuf },
    /// Depth of the second well balancing a (Gamma_1, Gamma_2) lattice.
    Scan { config: PathBuf },
    /// Region of balanced three-well configurations in the (V_1, V_3) plane.
    Boundary { config: PathBuf },
}

impl CliCommand {
    fn parts(&self) -> (Command, &Path) {
        match self {
            CliCommand::Spectrum { config } => (Command::Spectrum, config),
            CliCommand::MatrixModel { config } => (Command::MatrixModel, config),
            CliCommand::Balance { config } => (Command::Balance, config),
            CliCommand::Sweep { config } => (Command::Sweep, config),
            CliCommand::Scan { config } => (Command::Scan, config),
            CliCommand::Boundary { config } => (Command::Boundary, config),
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn numerical(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("cannot write output: {e}"))
    }
}

impl From<ContinuationError> for Failure {
    fn from(e: ContinuationError) -> Self {
        let code = match e {
            ContinuationError::Infeasible(_) | ContinuationError::ImaginaryGainLoss { .. } => EXIT_INFEASIBLE,
            ContinuationError::InvalidSpec(_) | ContinuationError::Potential(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Diagnostics go to stderr, summaries to stdout.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_CONFIG;
        }
        // Fails only if a pool already exists (repeated calls in one process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Runs one command, writing its artifacts to `cli.out`; returns the text
/// summary.
pub fn run(cli: &Cli) -> Result<String, Failure> {
    let (command, path) = cli.command.parts();
    let resolved = config::load(path)?.resolve(command)?;
    std::fs::create_dir_all(&cli.out)?;
    let out = Output {
        dir: &cli.out,
        config: &resolved,
        hash: resolved.sha256(),
    };
    match command {
        Command::Spectrum => cmd_spectrum(&out),
        Command::MatrixModel => cmd_matrix_model(&out),
        Command::Balance => cmd_balance(&out),
        Command::Sweep => cmd_sweep(&out),
        Command::Scan => cmd_scan(&out),
        Command::Boundary => cmd_boundary(&out),
    }
}

struct Output<'a> {
    dir: &'a Path,
    config: &'a ResolvedConfig,
    hash: String,
}

impl Output<'_> {
    fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
        let mut text = format!("# gainloss {} config_sha256={}\n", env!("CARGO_PKG_VERSION"), self.hash);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header).map_err(Failure::config)?;
        for r in rows {
            w.write_record(r).map_err(Failure::config)?;
        }
        let bytes = w.into_inner().map_err(Failure::config)?;
        text.push_str(std::str::from_utf8(&bytes).expect("csv output is UTF-8"));
        std::fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    /// `body` plus the version, config hash and resolved config.
    fn json(&self, name: &str, body: Value) -> Result<(), Failure> {
        let mut doc = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": self.hash,
            "config": serde_json::to_value(self.config).expect("config serializes"),
        });
        if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
            d.extend(b);
        }
        let mut text = serde_json::to_string_pretty(&doc).expect("json serializes");
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}

/// At most 9 significant digits, shortest form that round-trips at that
/// precision, always with a decimal point. Plain notation for magnitudes in
/// `[1e-5, 1e15)` and zero, scientific (`1.5e-9`) otherwise.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if a == 0.0 || (1e-5..1e15).contains(&a) {
        let mut s = format!("{rounded}");
        if !s.contains('.') {
            s.push_str(".0");
        }
        s
    } else {
        let s = format!("{rounded:e}");
        match s.split_once('e') {
            Some((m, e)) if !m.contains('.') => format!("{m}.0e{e}"),
            _ => s,
        }
    }
}

/// `a+bi` / `a-bi` with both parts as in [`fmt_float`].
pub fn fmt_complex(z: Complex64) -> String {
    let im = fmt_float(z.im);
    match im.strip_prefix('-') {
        Some(abs) => format!("{}-{abs}i", fmt_float(z.re)),
        None => format!("{}+{im}i", fmt_float(z.re)),
    }
}

fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn labels(c: &Classification, n: usize) -> String {
    (0..n).map(|i| c.label(i)).collect::<Vec<_>>().join(";")
}

fn cmd_spectrum(out: &Output) -> Result<String, Failure> {
    let (p, grid) = (out.config.potential(), out.config.grid());
    let spectrum = solve_lowest(&p, &grid, out.config.states(), &out.config.solver.options()).map_err(Failure::numerical)?;
    let energies = spectrum.energies();
    let class = classify(&energies, DEFAULT_TOLERANCE);
    let mut rows = Vec::new();
    let mut summary = String::new();
    for (i, pair) in spectrum.pairs().iter().enumerate() {
        let (_, integral) = balance_check(pair, &p, &grid);
        rows.push(vec![
            (i + 1).to_string(),
            fmt_float(pair.energy.re),
            fmt_float(pair.energy.im),
            class.label(i).to_string(),
            fmt_float(integral),
        ]);
        let _ = writeln!(summary, "mu{} = {} ({})", i + 1, fmt_complex(pair.energy), class.label(i));
    }
    let header = ["index", "re_mu", "im_mu", "class", "balance_integral"].map(String::from);
    out.csv("spectrum.csv", &header, &rows)?;
    out.json(
        "spectrum.meta.json",
        json!({
            "resolved_grid": out.config.grid,
            "tolerance": out.config.solver.tol,
            "residuals": spectrum.pairs().iter().map(|e| e.residual).collect::<Vec<_>>(),
            "max_residual": spectrum.max_residual(),
            "degenerate": spectrum.degenerate(),
            "unbound": spectrum.unbound(),
        }),
    )?;
    Ok(summary)
}

fn cmd_matrix_model(out: &Output) -> Result<String, Failure> {
    let (p, grid) = (out.config.potential(), out.config.grid());
    let (_, _, model) = build_model(&p, &grid).map_err(|e| match e {
        MatrixModelError::Potential(_) | MatrixModelError::SizeMismatch { .. } => Failure::config(e),
        e => Failure::numerical(e),
    })?;
    let dense = model.eigenvalues();
    let n = model.len();
    let continuous = solve_lowest(&p, &grid, n, &out.config.solver.options()).map_err(Failure::numerical)?;
    out.json(
        "model.json",
        json!({
            "epsilon": model.epsilon,
            "gamma": model.gamma,
            "j": model.j,
            "offdiag_residual": model.offdiag_residual,
            "lowdin_error": model.lowdin_error,
            "eigenvalues": dense.iter().map(|&z| complex_json(z)).collect::<Vec<_>>(),
            "continuous_eigenvalues": continuous.energies().iter().map(|&z| complex_json(z)).collect::<Vec<_>>(),
        }),
    )?;
    let mut s = String::new();
    match model.j {
        Some(j) => {
            let _ = writeln!(s, "J = {}", fmt_float(j));
        }
        None => {
            let _ = writeln!(s, "J = none (single well)");
        }
    }
    let _ = writeln!(s, "{:>3}  {:>30}  {:>30}", "n", "matrix model", "continuous");
    for (i, (a, b)) in dense.iter().zip(continuous.energies()).enumerate() {
        let _ = writeln!(s, "{:>3}  {:>30}  {:>30}", i + 1, fmt_complex(*a), fmt_complex(b));
    }
    Ok(s)
}

fn cmd_balance(out: &Output) -> Result<String, Failure> {
    let Task::Balance(task) = &out.config.task else { unreachable!("resolved for balance") };
    let (p, grid) = (out.config.potential(), out.config.grid());
    let free = task.free.clone().expect("resolved");
    let seed = match &task.seed {
        Some(s) => s.clone(),
        None => seed_from_matrix_model(&p, &grid, &free, out.config.solver.j_mode.into())?.values,
    };
    let residual = balance_residual(&p, &free, &grid, &out.config.solver.options());
    let record = solve_point(&residual, &seed, &out.config.solver.root, 0.0);
    out.json(
        "balance.json",
        json!({
            "params": free,
            "seed": seed,
            "root": record.solution,
            "residual_norm": record.residual_norm,
            "converged": record.converged,
            "failure": record.failure,
            "energies": record.energies.iter().map(|&z| complex_json(z)).collect::<Vec<_>>(),
            "classification": record.classification,
        }),
    )?;
    if !record.converged {
        return Err(Failure::numerical(format!(
            "root search did not converge ({})",
            record.failure.unwrap_or_default()
        )));
    }
    let mut s = String::new();
    for ((p, x0), x) in free.iter().zip(&seed).zip(&record.solution) {
        let _ = writeln!(s, "{p}: seed {} root {}", fmt_float(*x0), fmt_float(*x));
    }
    for (i, z) in record.energies.iter().enumerate() {
        let _ = writeln!(s, "mu{} = {}", i + 1, fmt_complex(*z));
    }
    Ok(s)
}

fn cmd_sweep(out: &Output) -> Result<String, Failure> {
    let Task::Sweep(task) = &out.config.task else { unreachable!("resolved for sweep") };
    let spec = SweepSpec {
        base_potential: out.config.potential(),
        swept: task.swept,
        values: task.values.clone(),
        solved: task.solved.clone(),
        seed_mode: task.seed_mode.clone(),
        grid: out.config.grid(),
        solver: out.config.solver.options(),
        root: out.config.solver.root,
        j_mode: out.config.solver.j_mode.into(),
        start_at: task.start_at,
        max_step: task.max_step,
    };
    let records = sweep_line(&spec)?;
    let m = task.solved.len().max(2);
    let mut header = vec![task.swept.to_string()];
    header.extend(task.solved.iter().map(|p| p.to_string()));
    for i in 1..=m {
        header.push(format!("re_mu{i}"));
        header.push(format!("im_mu{i}"));
    }
    header.extend(["class", "converged", "residual_norm", "failure"].map(String::from));
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![fmt_float(r.swept_value)];
            row.extend((0..task.solved.len()).map(|i| fmt_float(r.solution.get(i).copied().unwrap_or(f64::NAN))));
            for i in 0..m {
                let z = r.energies.get(i).copied().unwrap_or(nan);
                row.push(fmt_float(z.re));
                row.push(fmt_float(z.im));
            }
            row.push(labels(&r.classification, r.energies.len()));
            row.push(r.converged.to_string());
            row.push(fmt_float(r.residual_norm));
            row.push(r.failure.clone().unwrap_or_default());
            row
        })
        .collect();
    out.csv("sweep.csv", &header, &rows)?;
    finish_points(records.iter().filter(|r| r.converged).count(), records.len(), "sweep")
}

fn finish_points(converged: usize, total: usize, what: &str) -> Result<String, Failure> {
    if converged == 0 {
        return Err(Failure::numerical(format!("{what}: no point converged")));
    }
    Ok(format!("{what}: {converged}/{total} points converged\n"))
}

fn cmd_scan(out: &Output) -> Result<String, Failure> {
    let Task::Scan(task) = &out.config.task else { unreachable!("resolved for scan") };
    let spec = ScanSpec {
        base_potential: out.config.potential(),
        gamma1_values: task.gamma1.clone(),
        gamma2_values: task.gamma2.clone(),
        grid: out.config.grid(),
        solver: out.config.solver.options(),
        root: out.config.solver.root,
        j_mode: out.config.solver.j_mode.into(),
    };
    let rows = grid_scan(&spec)?;
    let header = [
        "gamma1", "gamma2", "depth2", "delta_v", "re_mu1", "im_mu1", "re_mu2", "im_mu2", "converged", "failure",
    ]
    .map(String::from);
    let flat: Vec<_> = rows.iter().flatten().collect();
    let table: Vec<Vec<String>> = flat
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.gamma1),
                fmt_float(r.gamma2),
                fmt_float(r.depth2),
                fmt_float(r.delta_v),
                fmt_float(r.mu1.re),
                fmt_float(r.mu1.im),
                fmt_float(r.mu2.re),
                fmt_float(r.mu2.im),
                r.converged.to_string(),
                r.failure.clone().unwrap_or_default(),
            ]
        })
        .collect();
    out.csv("scan.csv", &header, &table)?;
    finish_points(flat.iter().filter(|r| r.converged).count(), flat.len(), "scan")
}

fn cmd_boundary(out: &Output) -> Result<String, Failure> {
    let Task::Boundary(task) = &out.config.task else { unreachable!("resolved for boundary") };
    let mut spec = BoundarySpec::new(out.config.potential(), out.config.grid());
    spec.start_gain_loss = task.start_gain_loss.clone();
    spec.rays = task.rays;
    spec.max_radius = task.max_radius;
    spec.initial_step = task.initial_step;
    spec.min_step = task.min_step;
    spec.max_step = task.max_step;
    spec.gain_loss_cap = task.gain_loss_cap;
    spec.solver = out.config.solver.options();
    spec.root = out.config.solver.root;
    spec.j_mode = out.config.solver.j_mode.into();
    let continuous = trace_feasibility_boundary(&spec)?;
    let model = if task.model { Some(trace_model_boundary(&spec)?) } else { None };
    let header = ["trace", "ray", "angle", "radius", "v1", "v3", "reason", "gamma1", "gamma2", "gamma3"].map(String::from);
    let mut rows = Vec::new();
    let mut push = |name: &str, pts: &[BoundaryPoint]| {
        for (k, b) in pts.iter().enumerate() {
            let mut row = vec![
                name.to_string(),
                k.to_string(),
                fmt_float(b.angle),
                fmt_float(b.radius),
                fmt_float(b.v1),
                fmt_float(b.v3),
                serde_json::to_value(b.reason).expect("reason serializes").as_str().unwrap_or_default().to_string(),
            ];
            row.extend((0..3).map(|i| fmt_float(b.gain_loss.get(i).copied().unwrap_or(f64::NAN))));
            rows.push(row);
        }
    };
    push("continuous", &continuous);
    if let Some(m) = &model {
        push("model", m);
    }
    out.csv("boundary.csv", &header, &rows)?;
    let mut s = format!("boundary: {} rays traced\n", continuous.len());
    if let Some(m) = &model {
        let _ = writeln!(s, "overlap with matrix-model region (Jaccard): {}", fmt_float(jaccard(&continuous, m)));
    }
    Ok(s)
}
