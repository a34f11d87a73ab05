//! C interface to `gainloss`.
//!
//! Objects are opaque handles created by `gl_*_new` / `gl_*_solve` and
//! released with the matching `gl_*_free`. Every fallible call returns a
//! [`GlStatus`]; the message of the last failure on the calling thread is
//! available from [`gl_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gainloss::continuation::{balance_residual, seed_from_matrix_model, solve_point, ContinuationError};
use gainloss::matrix_model::{build_model, JMode};
use gainloss::rootfind::RootOptions;
use gainloss::{GaussianWell, Grid, MultiWellPotential, Param, SolverOptions, Spectrum};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalFailure = 3,
    Infeasible = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Which potential parameter a free variable refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlParamKind {
    Depth = 0,
    GainLoss = 1,
}

/// Opaque multi-well potential.
pub struct GlPotential(MultiWellPotential);

/// Opaque solved spectrum.
pub struct GlSpectrum(Spectrum);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("interior NULs removed"));
}

fn fail(status: GlStatus, msg: impl Into<String>) -> GlStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `GlStatus::Panic`.
fn guard(f: impl FnOnce() -> GlStatus) -> GlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(GlStatus::Panic, format!("internal error: {msg}"))
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Option<&'a [T]> {
    if n == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, n))
    }
}

fn grid(x_min: f64, x_max: f64, n_points: usize) -> Result<Grid, GlStatus> {
    Grid::new(x_min, x_max, n_points).map_err(|e| fail(GlStatus::InvalidArgument, e.to_string()))
}

fn param(kind: GlParamKind, well: usize) -> Param {
    match kind {
        GlParamKind::Depth => Param::Depth(well),
        GlParamKind::GainLoss => Param::GainLoss(well),
    }
}

/// Message of the last failure on this thread (empty if none). The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a potential of `n` Gaussian wells from parallel arrays.
///
/// # Safety
/// Each array must hold `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gl_potential_new(
    n: usize,
    depth: *const f64,
    gain_loss: *const f64,
    width: *const f64,
    center: *const f64,
    out: *mut *mut GlPotential,
) -> GlStatus {
    guard(|| {
        if out.is_null() {
            return fail(GlStatus::NullPointer, "out is NULL");
        }
        *out = ptr::null_mut();
        let (Some(d), Some(g), Some(w), Some(c)) =
            (slice(depth, n), slice(gain_loss, n), slice(width, n), slice(center, n))
        else {
            return fail(GlStatus::NullPointer, "well arrays must not be NULL");
        };
        let wells = (0..n).map(|i| GaussianWell::new(d[i], g[i], w[i], c[i])).collect();
        match MultiWellPotential::new(wells) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(GlPotential(p)));
                GlStatus::Ok
            }
            Err(e) => fail(GlStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `p` must come from [`gl_potential_new`] and not be freed yet, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gl_potential_free(p: *mut GlPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of wells.
///
/// # Safety
/// `p` must be a live potential handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn gl_potential_len(p: *const GlPotential) -> usize {
    p.as_ref().map_or(0, |p| p.0.len())
}

/// Sets one parameter of well `well` (0-based).
///
/// # Safety
/// `p` must be a live potential handle.
#[no_mangle]
pub unsafe extern "C" fn gl_potential_set(p: *mut GlPotential, kind: GlParamKind, well: usize, value: f64) -> GlStatus {
    guard(|| {
        let Some(pot) = p.as_mut() else {
            return fail(GlStatus::NullPointer, "potential is NULL");
        };
        match pot.0.with_param(param(kind, well), value) {
            Ok(q) => {
                pot.0 = q;
                GlStatus::Ok
            }
            Err(e) => fail(GlStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Solves for the `m` lowest states on `n_points` grid points spanning
/// `[x_min, x_max]` with default tolerances.
///
/// # Safety
/// `p` must be a live potential handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gl_spectrum_solve(
    p: *const GlPotential,
    x_min: f64,
    x_max: f64,
    n_points: usize,
    m: usize,
    out: *mut *mut GlSpectrum,
) -> GlStatus {
    guard(|| {
        if out.is_null() {
            return fail(GlStatus::NullPointer, "out is NULL");
        }
        *out = ptr::null_mut();
        let Some(pot) = p.as_ref() else {
            return fail(GlStatus::NullPointer, "potential is NULL");
        };
        let g = match grid(x_min, x_max, n_points) {
            Ok(g) => g,
            Err(s) => return s,
        };
        match gainloss::solve_lowest(&pot.0, &g, m, &SolverOptions::default()) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(GlSpectrum(s)));
                GlStatus::Ok
            }
            Err(e @ (gainloss::SolverError::InvalidOption(_) | gainloss::SolverError::TooManyStates { .. })) => {
                fail(GlStatus::InvalidArgument, e.to_string())
            }
            Err(e) => fail(GlStatus::NumericalFailure, e.to_string()),
        }
    })
}

/// # Safety
/// `s` must come from [`gl_spectrum_solve`] and not be freed yet, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gl_spectrum_free(s: *mut GlSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of states held.
///
/// # Safety
/// `s` must be a live spectrum handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn gl_spectrum_len(s: *const GlSpectrum) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Energy of state `i` (0-based, ascending real part).
///
/// # Safety
/// `s` must be a live spectrum handle; `re`, `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gl_spectrum_energy(s: *const GlSpectrum, i: usize, re: *mut f64, im: *mut f64) -> GlStatus {
    guard(|| {
        let (Some(s), false, false) = (s.as_ref(), re.is_null(), im.is_null()) else {
            return fail(GlStatus::NullPointer, "NULL argument");
        };
        let Some(pair) = s.0.pairs().get(i) else {
            return fail(GlStatus::InvalidArgument, format!("state {i} out of range ({} held)", s.0.len()));
        };
        *re = pair.energy.re;
        *im = pair.energy.im;
        GlStatus::Ok
    })
}

/// Copies the wave function of state `i` on the interior grid points
/// (`n_points - 2` values, L2-normalized) into `re` / `im`. With `len`
/// too small, stores the required length in `*needed` and returns
/// `BufferTooSmall`.
///
/// # Safety
/// `s` must be a live spectrum handle; `re`, `im` must hold `len` values;
/// `needed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gl_spectrum_wavefunction(
    s: *const GlSpectrum,
    i: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
    needed: *mut usize,
) -> GlStatus {
    guard(|| {
        let Some(s) = s.as_ref() else {
            return fail(GlStatus::NullPointer, "spectrum is NULL");
        };
        let Some(pair) = s.0.pairs().get(i) else {
            return fail(GlStatus::InvalidArgument, format!("state {i} out of range ({} held)", s.0.len()));
        };
        let n = pair.wavefunction.len();
        if let Some(needed) = needed.as_mut() {
            *needed = n;
        }
        if len < n {
            return fail(GlStatus::BufferTooSmall, format!("wave function needs {n} values, buffer holds {len}"));
        }
        if re.is_null() || im.is_null() {
            return fail(GlStatus::NullPointer, "output buffers must not be NULL");
        }
        for (k, z) in pair.wavefunction.iter().enumerate() {
            *re.add(k) = z.re;
            *im.add(k) = z.im;
        }
        GlStatus::Ok
    })
}

/// Effective matrix model: writes the `n` on-site energies and gain-loss
/// terms and the tunneling rate (NaN for a single well).
///
/// # Safety
/// `p` must be a live potential handle; `epsilon`, `gamma` must hold `len`
/// values; `j` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gl_matrix_model(
    p: *const GlPotential,
    x_min: f64,
    x_max: f64,
    n_points: usize,
    epsilon: *mut f64,
    gamma: *mut f64,
    len: usize,
    j: *mut f64,
) -> GlStatus {
    guard(|| {
        let Some(pot) = p.as_ref() else {
            return fail(GlStatus::NullPointer, "potential is NULL");
        };
        if epsilon.is_null() || gamma.is_null() || j.is_null() {
            return fail(GlStatus::NullPointer, "output pointers must not be NULL");
        }
        if len < pot.0.len() {
            return fail(GlStatus::BufferTooSmall, format!("{} wells, buffers hold {len}", pot.0.len()));
        }
        let g = match grid(x_min, x_max, n_points) {
            Ok(g) => g,
            Err(s) => return s,
        };
        match build_model(&pot.0, &g) {
            Ok((_, _, model)) => {
                for k in 0..model.len() {
                    *epsilon.add(k) = model.epsilon[k];
                    *gamma.add(k) = model.gamma[k];
                }
                *j = model.j.unwrap_or(f64::NAN);
                GlStatus::Ok
            }
            Err(e) => fail(GlStatus::NumericalFailure, e.to_string()),
        }
    })
}

/// Solves for the `k` free parameters (`kinds[i]` of well `wells[i]`,
/// 0-based) that make the lowest states real or conjugate pairs. `seed`
/// may be NULL to seed from the matrix model (two wells with one free
/// parameter, three wells with the three gain-loss terms). The potential
/// itself is left unchanged.
///
/// # Safety
/// `p` must be a live potential handle; `kinds`, `wells`, `root` (and
/// `seed` unless NULL) must hold `k` values; `residual_norm` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gl_balance_solve(
    p: *const GlPotential,
    x_min: f64,
    x_max: f64,
    n_points: usize,
    kinds: *const GlParamKind,
    wells: *const usize,
    k: usize,
    seed: *const f64,
    root: *mut f64,
    residual_norm: *mut f64,
) -> GlStatus {
    guard(|| {
        let Some(pot) = p.as_ref() else {
            return fail(GlStatus::NullPointer, "potential is NULL");
        };
        let (Some(kinds), Some(wells)) = (slice(kinds, k), slice(wells, k)) else {
            return fail(GlStatus::NullPointer, "kinds and wells must not be NULL");
        };
        if root.is_null() {
            return fail(GlStatus::NullPointer, "root is NULL");
        }
        if k == 0 || k > pot.0.len() {
            return fail(GlStatus::InvalidArgument, format!("{k} free parameters for {} wells", pot.0.len()));
        }
        let free: Vec<Param> = kinds.iter().zip(wells).map(|(&t, &w)| param(t, w)).collect();
        if let Some(bad) = free.iter().find(|f| pot.0.param(**f).is_err()) {
            return fail(GlStatus::InvalidArgument, format!("{bad} refers to a missing well"));
        }
        let g = match grid(x_min, x_max, n_points) {
            Ok(g) => g,
            Err(s) => return s,
        };
        let start = if seed.is_null() {
            match seed_from_matrix_model(&pot.0, &g, &free, JMode::default()) {
                Ok(s) => s.values,
                Err(e @ (ContinuationError::Infeasible(_) | ContinuationError::ImaginaryGainLoss { .. })) => {
                    return fail(GlStatus::Infeasible, e.to_string());
                }
                Err(e @ ContinuationError::InvalidSpec(_)) => return fail(GlStatus::InvalidArgument, e.to_string()),
                Err(e) => return fail(GlStatus::NumericalFailure, e.to_string()),
            }
        } else {
            std::slice::from_raw_parts(seed, k).to_vec()
        };
        let residual = balance_residual(&pot.0, &free, &g, &SolverOptions::default());
        let record = solve_point(&residual, &start, &RootOptions::default(), 0.0);
        for (i, x) in record.solution.iter().enumerate() {
            *root.add(i) = *x;
        }
        if let Some(r) = residual_norm.as_mut() {
            *r = record.residual_norm;
        }
        if record.converged {
            GlStatus::Ok
        } else {
            fail(
                GlStatus::NumericalFailure,
                format!("root search did not converge: {}", record.failure.unwrap_or_default()),
            )
        }
    })
}
