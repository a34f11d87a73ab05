use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use gainloss_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gl_last_error()) }.to_string_lossy().into_owned()
}

fn potential(depth: &[f64], gain_loss: &[f64], width: f64, center: &[f64]) -> *mut GlPotential {
    let w = vec![width; depth.len()];
    let mut p = ptr::null_mut();
    let s = unsafe {
        gl_potential_new(depth.len(), depth.as_ptr(), gain_loss.as_ptr(), w.as_ptr(), center.as_ptr(), &mut p)
    };
    assert_eq!(s, GlStatus::Ok, "{}", last_error());
    p
}

#[test]
fn spectrum_round_trip() {
    let p = potential(&[-3.0, -3.0], &[0.1, -0.1], 1.0, &[-1.5, 1.5]);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { gl_spectrum_solve(p, -12.0, 12.0, 801, 2, &mut s) }, GlStatus::Ok);
    assert_eq!(unsafe { gl_spectrum_len(s) }, 2);
    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(unsafe { gl_spectrum_energy(s, 0, &mut re, &mut im) }, GlStatus::Ok);
    // Below the symmetry-breaking threshold both levels are real.
    assert!(re < -2.0 && im.abs() < 1e-8, "{re} {im}");

    let mut needed = 0;
    let st = unsafe { gl_spectrum_wavefunction(s, 0, ptr::null_mut(), ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, GlStatus::BufferTooSmall);
    assert_eq!(needed, 799);
    let (mut a, mut b) = (vec![0.0; needed], vec![0.0; needed]);
    let st = unsafe { gl_spectrum_wavefunction(s, 0, a.as_mut_ptr(), b.as_mut_ptr(), needed, ptr::null_mut()) };
    assert_eq!(st, GlStatus::Ok);
    let h = 24.0 / 800.0;
    let norm: f64 = a.iter().zip(&b).map(|(x, y)| x * x + y * y).sum::<f64>() * h;
    assert!((norm - 1.0).abs() < 1e-10);

    assert_eq!(unsafe { gl_spectrum_energy(s, 5, &mut re, &mut im) }, GlStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
    unsafe {
        gl_spectrum_free(s);
        gl_potential_free(p);
    }
}

#[test]
fn invalid_input_is_reported() {
    let mut p = ptr::null_mut();
    let d = [-3.0];
    let g = [0.0];
    let w = [-1.0];
    let c = [0.0];
    let s = unsafe { gl_potential_new(1, d.as_ptr(), g.as_ptr(), w.as_ptr(), c.as_ptr(), &mut p) };
    assert_eq!(s, GlStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(last_error().contains("width"));

    let s = unsafe { gl_potential_new(1, ptr::null(), g.as_ptr(), w.as_ptr(), c.as_ptr(), &mut p) };
    assert_eq!(s, GlStatus::NullPointer);
    let mut sp = ptr::null_mut();
    assert_eq!(unsafe { gl_spectrum_solve(ptr::null(), -5.0, 5.0, 101, 1, &mut sp) }, GlStatus::NullPointer);

    let q = potential(&[-3.0], &[0.0], 1.0, &[0.0]);
    assert_eq!(unsafe { gl_spectrum_solve(q, 5.0, -5.0, 101, 1, &mut sp) }, GlStatus::InvalidArgument);
    assert_eq!(unsafe { gl_potential_set(q, GlParamKind::Depth, 3, -1.0) }, GlStatus::InvalidArgument);
    assert_eq!(unsafe { gl_potential_set(q, GlParamKind::GainLoss, 0, 0.5) }, GlStatus::Ok);
    unsafe {
        gl_potential_free(q);
        gl_potential_free(ptr::null_mut());
        gl_spectrum_free(ptr::null_mut());
    }
}

#[test]
fn matrix_model_and_balance() {
    let p = potential(&[-3.0, -3.0], &[0.15, 0.0], 1.0, &[-1.5, 1.5]);
    let (mut eps, mut gam, mut j) = ([0.0; 2], [0.0; 2], 0.0);
    let s = unsafe { gl_matrix_model(p, -12.0, 12.0, 1201, eps.as_mut_ptr(), gam.as_mut_ptr(), 2, &mut j) };
    assert_eq!(s, GlStatus::Ok, "{}", last_error());
    assert!(j > 0.0 && (eps[0] - eps[1]).abs() < 1e-10, "{eps:?} {j}");
    // Orthogonalization leaks a little of the first well's gain into the second.
    assert!(gam[0] > 0.0 && gam[1].abs() < 0.1 * gam[0], "{gam:?}");

    // Symmetric wells: the loss balancing a gain is its mirror image.
    let kinds = [GlParamKind::GainLoss];
    let wells = [1usize];
    let (mut root, mut res) = ([0.0], 0.0);
    let s = unsafe {
        gl_balance_solve(p, -12.0, 12.0, 1201, kinds.as_ptr(), wells.as_ptr(), 1, ptr::null(), root.as_mut_ptr(), &mut res)
    };
    assert_eq!(s, GlStatus::Ok, "{}", last_error());
    assert!((root[0] + 0.15).abs() < 1e-8, "{root:?}");
    assert!(res < 1e-9);
    unsafe { gl_potential_free(p) };

    // Two gains cannot be balanced by adjusting a depth.
    let q = potential(&[-3.0, -3.2], &[0.2, 0.1], 1.0, &[-1.5, 1.5]);
    let kinds = [GlParamKind::Depth];
    let s = unsafe {
        gl_balance_solve(q, -12.0, 12.0, 801, kinds.as_ptr(), wells.as_ptr(), 1, ptr::null(), root.as_mut_ptr(), ptr::null_mut())
    };
    assert_eq!(s, GlStatus::Infeasible);
    unsafe { gl_potential_free(q) };
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gainloss.h")).unwrap();
    for name in [
        "gl_potential_new",
        "gl_potential_free",
        "gl_spectrum_solve",
        "gl_spectrum_wavefunction",
        "gl_matrix_model",
        "gl_balance_solve",
        "gl_last_error",
        "typedef struct GlPotential GlPotential",
        "GL_STATUS_INFEASIBLE = 4",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// Builds and runs a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let profile_dir = target.parent().unwrap().join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = profile_dir.join("libgainloss_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let exe = target.join("capi_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("ok"), "{text}");
}
