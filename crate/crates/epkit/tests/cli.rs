//! End-to-end tests of the `epkit` binary: golden outputs on the bundled
//! fixtures, exit codes, CSV shapes, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn epkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epkit"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn analyze_reports_golden_composite_signature() {
    let out = run(epkit().arg("analyze").arg(fixture("ep3_composite.json")));
    let v = stdout_json(&out);
    assert_eq!(v["format"], "epkit/1");
    assert_eq!(v["cluster_count"], 1);
    let c = &v["clusters"][0];
    assert_eq!(c["algebraic_multiplicity"], 4);
    assert_eq!(c["geometric_multiplicity"], 2);
    assert_eq!(c["order"], 3);
    assert_eq!(c["jordan_block_sizes"], serde_json::json!([3, 1]));
    assert!((c["xi"].as_f64().unwrap() - 2.0).abs() <= 1e-10);
}

#[test]
fn analyze_identity_is_semisimple() {
    let out = run(epkit().arg("analyze").arg(fixture("identity2.json")));
    let v = stdout_json(&out);
    let c = &v["clusters"][0];
    assert_eq!(c["order"], 1);
    assert_eq!(c["xi"], 0.0);
}

#[test]
fn analyze_separates_distinct_levels() {
    let out = run(epkit().arg("analyze").arg(fixture("diag123.json")));
    let v = stdout_json(&out);
    assert_eq!(v["cluster_count"], 3);
    for c in v["clusters"].as_array().unwrap() {
        assert_eq!(c["order"], 1);
        assert_eq!(c["algebraic_multiplicity"], 1);
    }
}

#[test]
fn analyze_rejects_malformed_json_with_line_info() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\n  \"format\": \"epkit/1\",\n  ][\n}").unwrap();
    let out = run(epkit().arg("analyze").arg(&path));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "diagnostic names the line: {err}");
}

#[test]
fn analyze_missing_file_exits_2() {
    let out = run(epkit().arg("analyze").arg("/nonexistent/nope.json"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compose_predicts_and_verifies_golden_pair() {
    let out = run(epkit()
        .arg("compose")
        .arg(fixture("ep2.json"))
        .arg(fixture("ep2.json"))
        .arg("--verify"));
    let v = stdout_json(&out);
    assert_eq!(v["verified"], true);
    let p = &v["prediction"];
    assert_eq!(p["ep_order"], 3);
    assert!((p["xi"].as_f64().unwrap() - 2.0).abs() <= 1e-12);
    assert_eq!(p["max_geometric_multiplicity"], 2);
    assert_eq!(
        p["ep_state"],
        serde_json::json!([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    );
    let ver = &v["verification"];
    assert_eq!(ver["observed_block_sizes"], serde_json::json!([3, 1]));
    assert_eq!(ver["extra_state_count"], 1);
    let conc = ver["extra_state_concurrences"][0].as_f64().unwrap();
    assert!((conc - 1.0).abs() <= 1e-10);
}

#[test]
fn compose_three_chains_gives_fourth_order() {
    let out = run(epkit()
        .arg("compose")
        .arg(fixture("ep2.json"))
        .arg(fixture("ep2.json"))
        .arg(fixture("ep2.json")));
    let v = stdout_json(&out);
    assert_eq!(v["prediction"]["ep_order"], 4);
    assert!((v["prediction"]["xi"].as_f64().unwrap() - 6.0).abs() <= 1e-12);
}

#[test]
fn compose_rejects_non_degenerate_subsystem_with_exit_4() {
    let out = run(epkit()
        .arg("compose")
        .arg(fixture("diag123.json"))
        .arg(fixture("ep2.json")));
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn perturb_global_sweep_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(epkit()
        .current_dir(dir.path())
        .arg("perturb")
        .arg(fixture("perturb_global.json"))
        .arg("--out")
        .arg("report.json")
        .arg("--jobs")
        .arg("2"));
    assert!(out.status.success());
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let rep = &v["report"];
    assert_eq!(rep["order"], 3);
    assert!(rep["all_bounds_satisfied"].as_bool().unwrap());
    let slope = rep["fitted_exponent"]["exponent"].as_f64().unwrap();
    assert!((slope - 1.0 / 3.0).abs() <= 0.02, "global slope {slope}");
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epsilon,max_splitting,bound_rhs,slack"));
    assert_eq!(lines.count(), 7);
}

#[test]
fn perturb_is_deterministic_under_fixed_seed() {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = run(epkit()
            .current_dir(dir.path())
            .arg("perturb")
            .arg(fixture("perturb_global.json"))
            .arg("--seed")
            .arg("42")
            .arg("--out")
            .arg("report.json"));
        assert!(out.status.success());
        outputs.push((
            std::fs::read(dir.path().join("report.json")).unwrap(),
            std::fs::read(dir.path().join("report.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "JSON reports differ across runs");
    assert_eq!(outputs[0].1, outputs[1].1, "CSV files differ across runs");
}

#[test]
fn perturb_locality_comparison_emits_paired_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(epkit()
        .current_dir(dir.path())
        .arg("perturb")
        .arg(fixture("perturb_locality.json"))
        .arg("--out")
        .arg("pair.json"));
    assert!(out.status.success());
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pair.json")).unwrap())
            .unwrap();
    let local = v["local"]["fitted_exponent"]["exponent"].as_f64().unwrap();
    let global = v["global"]["fitted_exponent"]["exponent"].as_f64().unwrap();
    assert!((local - 0.5).abs() <= 0.02, "local slope {local}");
    assert!((global - 1.0 / 3.0).abs() <= 0.02, "global slope {global}");
    assert!(dir.path().join("pair_local.csv").exists());
    assert!(dir.path().join("pair_global.csv").exists());
}

#[test]
fn perturb_rejects_empty_epsilon_list() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"kind": "perturb", "matrix": "{}", "epsilons": [], "random_global": true}}"#,
            fixture("ep3_composite.json").display()
        ),
    )
    .unwrap();
    let out = run(epkit().current_dir(dir.path()).arg("perturb").arg(&config));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evolve_traces_concurrence_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(epkit()
        .current_dir(dir.path())
        .arg("evolve")
        .arg(fixture("evolve_e3.json"))
        .arg("--out")
        .arg("trace.json"));
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.starts_with("t,growth,concurrence\n"));
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.json")).unwrap())
            .unwrap();
    assert_eq!(v["method"], "truncated_nilpotent");
    let conc = v["concurrence"].as_array().unwrap();
    assert!((conc[0].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    assert!(conc.last().unwrap().as_f64().unwrap() < 0.01);
}

#[test]
fn figure1_frozen_coupling_matches_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(epkit()
        .current_dir(dir.path())
        .arg("figure1")
        .arg(fixture("figure1_frozen.json")));
    let v = stdout_json(&out);
    assert_eq!(v["epsilon"], 0.0);
    let final_c = v["final_concurrence"].as_array().unwrap();
    assert!((final_c[3].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    assert!(final_c[0].as_f64().unwrap() < 0.01);

    let csv = std::fs::read_to_string(dir.path().join("figure1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,C_e1,C_e2,C_e3,C_e4"));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let (t, c1, c4) = (cols[0], cols[1], cols[4]);
        assert!((c1 - 2.0 / (t.powi(4) + 2.0)).abs() <= 1e-9, "t = {t}");
        assert!((c4 - 1.0).abs() <= 1e-10, "t = {t}");
    }
}

#[test]
fn figure1_detuned_recovers_and_reports_recovery_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(epkit()
        .current_dir(dir.path())
        .arg("figure1")
        .arg("--epsilon")
        .arg("0.01")
        .arg("--t-max")
        .arg("30")
        .arg("--samples")
        .arg("600"));
    let v = stdout_json(&out);
    assert!(v["max_concurrence"][2].as_f64().unwrap() > 0.99);
    let t_star = v["e3_recovery_time"].as_f64().unwrap();
    let expected = std::f64::consts::PI / (2.0 * 0.1);
    assert!((t_star - expected).abs() <= 0.2, "recovery at {t_star}");
}

#[test]
fn figure1_negative_coupling_never_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(epkit()
        .current_dir(dir.path())
        .arg("figure1")
        .arg("--epsilon")
        .arg("-0.01")
        .arg("--t-max")
        .arg("100")
        .arg("--samples")
        .arg("500"));
    let v = stdout_json(&out);
    assert!(v["e3_recovery_time"].is_null());
    let csv = std::fs::read_to_string(dir.path().join("figure1.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        if cols[0] > 30.0 {
            assert!(cols[3] < 0.5, "concurrence {} at t = {}", cols[3], cols[0]);
        }
    }
}

#[test]
fn matrix_fixtures_are_in_canonical_form() {
    for name in [
        "ep2.json",
        "ep2_detuned_1e-2.json",
        "ep2_detuned_1e-4.json",
        "ep3_composite.json",
        "identity2.json",
        "diag123.json",
        "detune_factor.json",
    ] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let parsed = epkit::io::MatrixFile::parse_str(&text).unwrap();
        assert_eq!(parsed.canonical_json(), text, "{name} is not canonical");
        parsed.to_matrix().unwrap();
    }
}

#[test]
fn config_fixtures_parse() {
    for name in [
        "figure1_balanced.json",
        "figure1_frozen.json",
        "perturb_global.json",
        "perturb_locality.json",
        "evolve_e3.json",
    ] {
        epkit::io::load_config(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn wrong_config_kind_is_rejected() {
    let out = run(epkit().arg("perturb").arg(fixture("figure1_frozen.json")));
    assert_eq!(out.status.code(), Some(2));
}
