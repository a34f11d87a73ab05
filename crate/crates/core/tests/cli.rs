use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gainloss(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gainloss"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str], out: &Path) -> String {
    let o = gainloss(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = std::fs::read_to_string(path).unwrap();
    let (comment, body) = text.split_once('\n').unwrap();
    assert!(comment.starts_with("# gainloss ") && comment.contains("config_sha256="));
    csv::Reader::from_reader(body.as_bytes()).records().map(|r| r.unwrap()).collect()
}

fn num(r: &csv::StringRecord, i: usize) -> f64 {
    r[i].parse().unwrap()
}

#[test]
fn spectrum_of_balanced_double_well() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("double_well_spectrum.json");
    run_ok(&["spectrum", cfg.to_str().unwrap()], dir.path());
    let rows = csv_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(&rows[0][3], "real");
    assert!((num(&rows[0], 1) + 2.394828).abs() < 1e-3);
    assert!(num(&rows[0], 2).abs() < 1e-3);
    assert!((num(&rows[1], 1) + 1.950414).abs() < 1e-3);
    assert!((num(&rows[1], 2).abs() - 0.070374).abs() < 1e-3);
    // The balance integral tracks Im mu.
    for r in &rows {
        assert!((num(r, 2) - num(r, 4)).abs() < 1e-8);
    }
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(!text.contains('\r'));
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = configs().join("double_well_sweep.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_ok(&["sweep", cfg.to_str().unwrap()], a.path());
    run_ok(&["sweep", cfg.to_str().unwrap(), "--jobs", "1"], b.path());
    assert_eq!(
        std::fs::read(a.path().join("sweep.csv")).unwrap(),
        std::fs::read(b.path().join("sweep.csv")).unwrap()
    );
}

#[test]
fn embedded_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("double_well_spectrum.json");
    run_ok(&["spectrum", cfg.to_str().unwrap()], dir.path());
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectrum.meta.json")).unwrap()).unwrap();
    let again = tempfile::tempdir().unwrap();
    let path = write_config(again.path(), &serde_json::to_string(&meta["config"]).unwrap());
    run_ok(&["spectrum", path.to_str().unwrap()], again.path());
    assert_eq!(
        std::fs::read(dir.path().join("spectrum.csv")).unwrap(),
        std::fs::read(again.path().join("spectrum.csv")).unwrap()
    );
}

#[test]
fn single_well_has_no_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        r#"{"potential": [{"depth": -3.0, "gain_loss": 0.2, "width": 1.0, "center": 0.0}]}"#,
    );
    let stdout = run_ok(&["matrix-model", path.to_str().unwrap()], dir.path());
    assert!(stdout.contains("J = none"));
    let model: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert!(model["j"].is_null());
    assert_eq!(model["epsilon"].as_array().unwrap().len(), 1);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert_eq!(gainloss(&["spectrum", missing.to_str().unwrap()], dir.path()).status.code(), Some(1));

    let unknown = write_config(
        dir.path(),
        r#"{"potential": [{"depth": -3.0, "gain_loss": 0.0, "width": 1.0, "center": 0.0}], "colour": 1}"#,
    );
    let o = gainloss(&["spectrum", unknown.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let empty = write_config(
        dir.path(),
        r#"{"potential": [
              {"depth": -3.0, "gain_loss": 0.0, "width": 1.0, "center": -1.5},
              {"depth": -3.0, "gain_loss": 0.0, "width": 1.0, "center": 1.5}],
            "task": {"swept": "gain_loss:1", "values": [], "solved": ["gain_loss:2"]}}"#,
    );
    assert_eq!(gainloss(&["sweep", empty.to_str().unwrap()], dir.path()).status.code(), Some(1));

    let bad_width = write_config(
        dir.path(),
        r#"{"potential": [{"depth": -3.0, "gain_loss": 0.0, "width": -1.0, "center": 0.0}]}"#,
    );
    let o = gainloss(&["spectrum", bad_width.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("well 1"));
}

#[test]
fn infeasible_seed_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        r#"{"potential": [
              {"depth": -3.0, "gain_loss": 1.4, "width": 1.0, "center": -1.5},
              {"depth": -3.0, "gain_loss": 0.0, "width": 1.0, "center": 1.5}],
            "grid": {"x_min": -12.0, "x_max": 12.0, "n_points": 1201}}"#,
    );
    let o = gainloss(&["balance", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unconverged_root_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        r#"{"potential": [
              {"depth": -3.0, "gain_loss": 0.2, "width": 1.0, "center": -1.5},
              {"depth": -3.2, "gain_loss": 0.0, "width": 1.0, "center": 1.5}],
            "grid": {"x_min": -12.0, "x_max": 12.0, "n_points": 1201},
            "solver": {"root": {"max_evals": 2}},
            "task": {"seed": [0.3]}}"#,
    );
    let o = gainloss(&["balance", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("balance.json")).unwrap()).unwrap();
    assert_eq!(meta["converged"], Value::Bool(false));
}

#[test]
fn balance_matches_reference_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        r#"{"potential": [
              {"depth": -3.0, "gain_loss": 0.1, "width": 1.0, "center": -1.5},
              {"depth": -3.2, "gain_loss": 0.0, "width": 1.0, "center": 1.5}],
            "grid": {"x_min": -12.0, "x_max": 12.0, "n_points": 2001}}"#,
    );
    run_ok(&["balance", path.to_str().unwrap()], dir.path());
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("balance.json")).unwrap()).unwrap();
    let root = meta["root"][0].as_f64().unwrap();
    assert!((root + 0.058705).abs() < 1e-4, "{root}");
    assert_eq!(meta["params"][0], "gain_loss:2");
}
