use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flexgrid::flex::FlexibilityResult;
use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn flexgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexgrid")).args(args).env_remove("FLEXGRID_WORKERS").output().unwrap()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let o = flexgrid(args);
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

fn small_solve(dir: &Path, mode: &str, extra: &[&str]) -> (i32, PathBuf) {
    let feeder = data("three_bus.json");
    let out = dir.join(mode);
    let mut args = vec!["solve", "--feeder", feeder.to_str().unwrap(), "--mode", mode, "--vmin", "0.97", "--vmax", "1.02"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let (code, _, err) = run(&args);
    assert!(code == 0 || code == 4, "{err}");
    (code, out.join("result.json"))
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn loose_band_gives_full_range_at_every_node() {
    let dir = TempDir::new().unwrap();
    let f = data("ieee13.json");
    let (code, _, err) =
        run(&["worst-case", "--feeder", f.to_str().unwrap(), "--vmin", "0.5", "--vmax", "1.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&dir.path().join("limits_per_node.csv"));
    assert_eq!(rows[0], ["node", "label", "upper_kw", "lower_kw"]);
    assert_eq!(rows.len(), 37);
    for r in &rows[1..] {
        assert!((r[2].parse::<f64>().unwrap() - 1640.0).abs() < 1e-6);
        assert!((r[3].parse::<f64>().unwrap() + 1640.0).abs() < 1e-6);
    }
}

#[test]
fn constant_q_reports_zero_width_nodes_and_binding_node() {
    let dir = TempDir::new().unwrap();
    let f = data("ieee13.json");
    let (code, out, err) =
        run(&["worst-case", "--feeder", f.to_str().unwrap(), "--mode", "constant-q", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("binding"), "{out}");
    let rows = csv_rows(&dir.path().join("limits_per_node.csv"));
    let zero = rows[1..].iter().filter(|r| r[2].parse::<f64>().unwrap().abs() < 1e-9 && r[3].parse::<f64>().unwrap().abs() < 1e-9);
    assert!(zero.count() >= 2);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    let f = data("three_bus.json");
    let f = f.to_str().unwrap();
    // Anchor below the band.
    assert_eq!(run(&["worst-case", "--feeder", f, "--vmin", "0.98", "--out", d]).0, 3);
    assert_eq!(run(&["solve", "--feeder", f, "--vmin", "0.98", "--out", d]).0, 3);
    // Validation errors.
    assert_eq!(run(&["solve", "--feeder", f, "--vmin", "1.2", "--vmax", "1.1", "--out", d]).0, 2);
    assert_eq!(run(&["solve", "--feeder", "/no/such/file.json", "--out", d]).0, 2);
    assert_eq!(run(&["solve", "--feeder", f, "--mode", "droop", "--out", d]).0, 2);
    assert_eq!(run(&["solve", "--feeder", f, "--workers", "0", "--out", d]).0, 2);
    assert_eq!(run(&["solve", "--feeder", f, "--bisect-tol", "0", "--out", d]).0, 2);
    // Iteration cap.
    let (code, path) = small_solve(dir.path(), "constant-pf", &["--max-iterations", "1"]);
    assert_eq!(code, 4);
    let r: FlexibilityResult = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(r.fallback && !r.converged);
    assert_eq!(r.dp_plus_mw, r.worst_case_mw.1);
}

#[test]
fn single_worker_output_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let f = data("ieee13.json");
    let mut files = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = Command::new(env!("CARGO_BIN_EXE_flexgrid"))
            .args(["solve", "--feeder", f.to_str().unwrap(), "--mode", "volt-var", "--out", out.to_str().unwrap()])
            .env("FLEXGRID_WORKERS", "1")
            .output()
            .unwrap();
        assert!(o.status.success());
        files.push(std::fs::read(out.join("result.json")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn verify_accepts_converged_results_and_rejects_bad_ones() {
    let dir = TempDir::new().unwrap();
    let f = data("three_bus.json");
    let f = f.to_str().unwrap();
    let d = dir.path().to_str().unwrap();
    for mode in ["constant-pf", "constant-q", "volt-var"] {
        let (_, path) = small_solve(dir.path(), mode, &[]);
        let (code, _, err) = run(&["verify", "--feeder", f, "--result", path.to_str().unwrap(), "--out", d]);
        assert_eq!(code, 0, "{mode}: {err}");
        assert!(dir.path().join("oracle_report.json").exists());
    }

    let (_, path) = small_solve(dir.path(), "constant-q", &[]);
    let text = std::fs::read_to_string(&path).unwrap();
    let good: FlexibilityResult = serde_json::from_str(&text).unwrap();

    let mut bad = good.clone();
    bad.decision.setpoints[0] = 1e3;
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
    assert_eq!(run(&["verify", "--feeder", f, "--result", bad_path.to_str().unwrap(), "--out", d]).0, 2);

    let mut inflated = good.clone();
    inflated.decision.dp_plus_kw = 50.0;
    std::fs::write(&bad_path, serde_json::to_string(&inflated).unwrap()).unwrap();
    let (code, _, err) = run(&["verify", "--feeder", f, "--result", bad_path.to_str().unwrap(), "--out", d]);
    assert_eq!(code, 1);
    assert!(err.contains("violation at node y.a") || err.contains("violation at node x.a"), "{err}");
}

#[test]
fn plotdata_writes_documented_tables() {
    let dir = TempDir::new().unwrap();
    let (_, path) = small_solve(dir.path(), "constant-pf", &[]);
    let out = dir.path().join("plots");
    let (code, _, err) = run(&["plotdata", "--result", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let limits = csv_rows(&out.join("limits_per_node.csv"));
    assert_eq!(limits.len(), 1 + 2);
    let sp = csv_rows(&out.join("setpoints.csv"));
    assert_eq!(sp[0], ["inverter", "label", "value", "lower", "upper", "unit"]);
    for r in &sp[1..] {
        let v: f64 = r[2].parse().unwrap();
        assert!(v >= r[3].parse::<f64>().unwrap() - 1e-12 && v <= r[4].parse::<f64>().unwrap() + 1e-12);
        assert_eq!(r[5], "ratio");
    }
    let mags = csv_rows(&out.join("magnitudes.csv"));
    assert_eq!(mags[0], ["scenario", "node", "label", "linear", "nonlinear", "error"]);
    assert_eq!(mags.len(), 1 + 4 * 2);

    let mut empty: FlexibilityResult = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    empty.worst_case.nodes.clear();
    empty.setpoints.clear();
    empty.magnitudes.clear();
    let p = dir.path().join("empty.json");
    std::fs::write(&p, serde_json::to_string(&empty).unwrap()).unwrap();
    let out = dir.path().join("empty");
    assert_eq!(run(&["plotdata", "--result", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    for name in ["limits_per_node.csv", "setpoints.csv", "magnitudes.csv"] {
        assert_eq!(csv_rows(&out.join(name)).len(), 1, "{name}");
    }
}
