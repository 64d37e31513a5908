use std::path::Path;
use std::process::{Command, Output};

fn pdae_lq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdae-lq"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn diagnostics(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("diagnostics.json")).expect("diagnostics written");
    serde_json::from_str(&text).unwrap()
}

const SCALAR: &str = r#"{
    "problem": {"kind": "matrices",
                "matrices": {"E": [[1, 0], [0, 0]], "A": [[-1, 0], [0, -2]], "B": [[1], [1]]},
                "initial_state": [1, 0]},
    "weights": {"Q": "identity", "R": [[1]]},
    "horizon": {"t_f": 6, "n_output_nodes": 301},
    "checks": {"picard": true, "oracle": true, "oracle_steps": 200}
}"#;

#[test]
fn scalar_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pdae_lq(&["run", "--scenario", "scalar", "--output", "out"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = tmp.path().join("out");
    for f in ["trajectory.csv", "control.csv", "riccati.csv", "summary.json", "control.svg", "diagnostics.json"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let traj = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next().unwrap(), "t,x_1,x_2,u_1");
    assert_eq!(lines.count(), 601);
    let riccati = std::fs::read_to_string(dir.join("riccati.csv")).unwrap();
    assert!(riccati.starts_with("t,cost_to_go_xi,frobenius_Pit1\n"));

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let j_fb = summary["J_feedback"].as_f64().unwrap();
    let j_min = summary["J_min_formula"].as_f64().unwrap();
    assert!((j_fb - j_min).abs() / j_min < 1e-3);
    assert!(summary["J_picard"].is_f64());
    assert!(summary["J_oracle"].is_f64());
    assert_eq!(summary["seed"].as_u64(), Some(0x5EED));
    assert_eq!(diagnostics(&dir)["status"], "ok");
}

#[test]
fn csv_output_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("scalar.json"), SCALAR).unwrap();
    for dir in ["a", "b"] {
        let out = pdae_lq(&["run", "--config", "scalar.json", "--output", dir], tmp.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in ["trajectory.csv", "control.csv", "riccati.csv"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn sequential_and_parallel_csv_agree() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("scalar.json"), SCALAR).unwrap();
    let par = pdae_lq(&["run", "--config", "scalar.json", "--output", "par"], tmp.path());
    let seq = pdae_lq(&["run", "--config", "scalar.json", "--output", "seq", "--sequential"], tmp.path());
    assert!(par.status.success() && seq.status.success());
    for f in ["trajectory.csv", "riccati.csv"] {
        let a = std::fs::read(tmp.path().join("par").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("seq").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn malformed_config_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.json"), "{\"problem\": {\"kind\": \"matrices\"").unwrap();
    let out = pdae_lq(&["run", "--config", "bad.json", "--output", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Config"), "{}", stderr(&out));
    assert_eq!(diagnostics(&tmp.path().join("out"))["exit_code"], 1);

    let out = pdae_lq(&["run", "--scenario", "no-such-scenario", "--output", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn higher_index_pencil_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "problem": {"kind": "matrices",
                    "matrices": {"E": [[0, 1], [0, 0]], "A": [[1, 0], [0, 1]], "B": [[0], [1]]},
                    "initial_state": [0, 0]},
        "weights": {"Q": "identity", "R": [[1]]},
        "horizon": {"t_f": 1}
    }"#;
    std::fs::write(tmp.path().join("nilpotent.json"), cfg).unwrap();
    let out = pdae_lq(&["verify", "--config", "nilpotent.json", "--output", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("HigherIndex"), "{}", stderr(&out));
    let d = diagnostics(&tmp.path().join("out"));
    assert_eq!(d["error"]["kind"], "HigherIndex");
}

#[test]
fn incompatible_weights_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    // Q couples the differential and algebraic coordinates.
    let cfg = r#"{
        "problem": {"kind": "matrices",
                    "matrices": {"E": [[1, 0], [0, 0]], "A": [[-1, 0], [0, -2]], "B": [[1], [1]]},
                    "initial_state": [1, 0]},
        "weights": {"Q": [[1, 0.5], [0.5, 1]], "R": [[1]]},
        "horizon": {"t_f": 1}
    }"#;
    std::fs::write(tmp.path().join("coupled.json"), cfg).unwrap();
    let out = pdae_lq(&["verify", "--config", "coupled.json", "--output", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("IncompatibleWeights"), "{}", stderr(&out));
}

#[test]
fn verify_scalar_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pdae_lq(&["verify", "--scenario", "scalar", "--output", "out"], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", stderr(&out));
    assert!(!stdout.contains("FAIL"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/verify.json")).unwrap()).unwrap();
    assert_eq!(report["failed"], 0);
    let names: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    for expected in ["projector_algebra", "dre_midpoint_residual", "zu_certificate", "optimality_restart", "oracle_gap"] {
        assert!(names.contains(&expected), "{expected} missing");
    }
}

#[test]
fn lqr_reduction_reports_classic_agreement() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pdae_lq(&["run", "--scenario", "lqr-reduction", "--output", "out"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    assert!(summary["classic_lqr"]["gain_rel_error"].as_f64().unwrap() < 1e-6);
    assert!(summary["classic_lqr"]["cost_rel_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn parabolic_elliptic_config_writes_heatmaps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "problem": {"kind": "parabolic-elliptic", "params": {"n_elements": 6}},
        "weights": {"Q": "mass"},
        "horizon": {"t_f": 2, "n_output_nodes": 201},
        "semi_explicit": true,
        "output_dir": "fem"
    }"#;
    std::fs::write(tmp.path().join("fem.json"), cfg).unwrap();
    let out = pdae_lq(&["run", "--config", "fem.json"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["w_controlled.svg", "v_controlled.svg", "w_uncontrolled.svg", "v_uncontrolled.svg"] {
        assert!(tmp.path().join("fem").join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("fem/summary.json")).unwrap()).unwrap();
    assert!((summary["leading_open_loop_rate"].as_f64().unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn verify_paper_example_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pdae_lq(&["verify", "--scenario", "paper-example", "--output", "out"], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", stderr(&out));
    assert!(stdout.contains("picard_fixed_point") && stdout.contains("oracle_gap"));
}
