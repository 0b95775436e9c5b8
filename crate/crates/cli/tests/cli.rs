use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn coniq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coniq")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn spectrum_grid_pauli() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let input = data("pauli.json");
    let o = coniq(&["spectrum", "--input", input.to_str().unwrap(), "--out", out, "--grid", "51"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2601);
    let centre: Vec<f64> = rows[1300].split(',').map(|x| x.parse().unwrap()).collect();
    assert!(centre[0].abs() < 1e-12 && centre[1].abs() < 1e-12);
    assert!(centre[4].abs() < 1e-12);
    // analytic gap 2|u|
    for row in rows.iter().step_by(97) {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[3] - v[2] - 2.0 * v[0].hypot(v[1])).abs() < 1e-12);
    }
}

#[test]
fn spectrum_single_point_grid() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("pauli.json");
    let o = coniq(&[
        "spectrum",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--grid",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("-1e0,-1e0,"));
}

#[test]
fn missing_file_names_path() {
    let o = coniq(&["spectrum", "--input", "/nonexistent/family.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/family.json"));
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"dim\": 2,\n  \"drift\": [\n}").unwrap();
    let o = coniq(&["certify", "--input", bad.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") && err.contains("column"), "{err}");
}

#[test]
fn dimension_mismatch_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"dim": 2, "drift": {"re": [[0,0],[0,0]]}, "controlled": [{"re": [[1,0,0],[0,1,0],[0,0,1]]}, {"re": [[1,0],[0,-1]]}], "box": [[-1,1],[-1,1]]}"#,
    )
    .unwrap();
    let o = coniq(&["spectrum", "--input", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn randomized_commands_require_seed() {
    let input = data("pauli.json");
    for cmd in ["certify", "find-intersections", "synthesize"] {
        let o = coniq(&[cmd, "--input", input.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{cmd}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
    }
    assert_eq!(code(&coniq(&["ensemble", "--trials", "1"])), 2);
}

#[test]
fn certify_counterexample_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("diag_counterexample.json");
    let o = coniq(&["certify", "--input", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code(&o), 1);
    let cert = json(dir.path().join("certificate.json"));
    assert_eq!(cert["closure"]["dimension"], 2);
    assert_eq!(cert["verdict"], "not-certified");
}

#[test]
fn certify_pauli_and_determinism() {
    let input = data("pauli.json");
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = coniq(&["certify", "--input", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "5"]);
        assert_eq!(code(&o), 0);
        fs::read(dir.path().join("certificate.json")).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    let cert: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(cert["verdict"], "exactly-controllable-SU(n)");
    assert_eq!(cert["closure"]["dimension"], 3);
}

#[test]
fn find_intersections_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = coniq(&["find-intersections", "--input", data("ladder.json").to_str().unwrap(), "--out", out, "--seed", "2"]);
    assert_eq!(code(&o), 0);
    let v = json(dir.path().join("intersections.json"));
    let entries = v.as_array().unwrap();
    assert!(entries.iter().any(|e| e["level"] == 1 && e["conical"] == true));
    assert!(entries.iter().any(|e| e["level"] == 2 && e["conical"] == true));

    let o = coniq(&[
        "find-intersections",
        "--input",
        data("diag_counterexample.json").to_str().unwrap(),
        "--out",
        out,
        "--seed",
        "2",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn synthesize_then_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let input = data("ladder.json");
    let o = coniq(&["synthesize", "--input", input.to_str().unwrap(), "--out", out, "--seed", "3", "--epsilon", "0.01"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("path.json");
    let p = json(path.clone());
    assert_eq!(p["epsilon"], 0.01);
    let o = coniq(&[
        "simulate",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out,
        "--path",
        path.to_str().unwrap(),
        "--stride",
        "10",
    ]);
    assert_eq!(code(&o), 0);
    let s = json(dir.path().join("simulation.json"));
    assert!(s["final_level_populations"][2].as_f64().unwrap() >= 0.9);
}

#[test]
fn simulate_constant_control_norm_defect() {
    let dir = tempfile::tempdir().unwrap();
    let o = coniq(&[
        "simulate",
        "--input",
        data("pauli.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--hold",
        "0.3,-0.4",
        "--duration",
        "20",
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,u_1,u_2,pop_1,pop_2,norm_defect");
    for line in lines {
        let defect: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(defect <= 1e-9);
    }
}

#[test]
fn ensemble_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = coniq(&["ensemble", "--n", "3", "--m", "2", "--trials", "50", "--seed", "7", "--out", out]);
    assert_eq!(code(&o), 0);
    let v = json(dir.path().join("ensemble.json"));
    assert!(v["conical_fraction"].as_f64().unwrap() >= 0.9);
    let rows = fs::read_to_string(dir.path().join("ensemble_trials.csv")).unwrap();
    assert_eq!(rows.lines().count(), 51);
    assert_eq!(code(&coniq(&["ensemble", "--m", "5", "--seed", "1", "--out", out])), 2);
}
