//! End-to-end runs of the `htn` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use htn::qcompile::{parse, simulate, StateVector};

fn htn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htn")).args(args).output().expect("spawn htn")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn iris_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
            "dataset": {{"kind": "iris", "path": "{}/data/iris.csv"}},
            "model": {{"chi": 2, "xi": 2}},
            "sweep": {{"n_sweeps": 1, "adam_steps_per_site": 3}}{extra}
        }}"#,
        env!("CARGO_MANIFEST_DIR")
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn toffoli_demo_matches_golden_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let out = htn(&["--out", dir.path().to_str().unwrap(), "demo", "toffoli"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&dir.path().join("toffoli.circ")), read(&golden("toffoli.circ")));
    let report: serde_json::Value = serde_json::from_str(&read(&dir.path().join("toffoli.json"))).unwrap();
    for case in report["cases"].as_array().unwrap() {
        assert!((case["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((case["retention"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn compile_writes_a_working_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let out = htn(&["--out", dir.path().to_str().unwrap(), "compile", golden("diag_projector.json").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&dir.path().join("diag_projector.circ"));
    assert_eq!(text, read(&golden("diag_projector.circ")));
    // diag(1, 0) keeps |0> with probability |a|^2
    let c = parse(&text).unwrap();
    let psi = StateVector::new(vec![htn::tn::C64::new(0.6, 0.0), htn::tn::C64::new(0.8, 0.0)]).unwrap();
    let sim = simulate(&c, &psi).unwrap();
    assert!((sim.retention - 0.36).abs() < 1e-12);
}

#[test]
fn compile_rejects_non_power_of_two() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, r#"{"real": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}"#).unwrap();
    let out = htn(&["--out", dir.path().to_str().unwrap(), "compile", m.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("power-of-two"));
}

#[test]
fn run_is_byte_identical_across_repeats_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = iris_config(dir.path(), "");
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out_dir = dir.path().join(name);
        let out = htn(&["--out", out_dir.to_str().unwrap(), "--threads", threads, "--seed", "5", "run", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut files: Vec<(String, String)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap() != "timing.json")
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), read(&p)))
            .collect();
        files.sort();
        assert!(files.iter().any(|f| f.0 == "aggregate.csv"));
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn grid_requires_a_grid_and_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let plain = iris_config(dir.path(), "");
    let out = htn(&["--out", dir.path().join("x").to_str().unwrap(), "grid", plain.to_str().unwrap()]);
    assert!(!out.status.success());

    let cfg = iris_config(dir.path(), r#", "grid": {"chi": [2], "xi": [2], "t": [1.0, 0.1, 0.001]}"#);
    let out_dir = dir.path().join("grid");
    let out = htn(&["--out", out_dir.to_str().unwrap(), "grid", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&out_dir.join("aggregate.csv"));
    let header = csv.lines().next().unwrap();
    for col in ["chi", "xi", "t_or_w", "split", "final_loss", "final_accuracy", "abstention", "retained_trace"] {
        assert!(header.split(',').any(|c| c == col), "missing {col} in {header}");
    }
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"dataset": {"kind": "iris", "path": "nope.csv"}, "model": {"chi": 2, "xi": 2}, "typo": 1}"#).unwrap();
    let out = htn(&["--out", dir.path().to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn verify_subset_passes_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = htn(&["--out", dir.path().to_str().unwrap(), "verify", "--only", "6,7"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 2, "{stdout}");
    let results: serde_json::Value = serde_json::from_str(&read(&dir.path().join("verify.json"))).unwrap();
    assert_eq!(results.as_array().unwrap().len(), 2);
}
