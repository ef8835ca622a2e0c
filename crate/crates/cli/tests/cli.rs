use std::path::{Path, PathBuf};
use std::process::Command;

use kdq::{from_document, run_scenario, to_document, to_table, CliError, ScenarioConfig};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn kdq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kdq"))
}

#[test]
fn every_bundled_config_validates() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")).unwrap() {
        let path = entry.unwrap().path();
        let config = ScenarioConfig::load(&path).unwrap();
        kdq::validate_scenario(config).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let err = ScenarioConfig::from_json(r#"{"name":"x","kind":"kd-distribution","dimension":2,"sed":1}"#)
        .unwrap_err();
    assert!(matches!(err, CliError::ConfigInvalid { .. }), "{err}");
}

#[test]
fn mismatched_operand_dimension_is_a_config_error() {
    let text = r#"{
        "name": "bad",
        "kind": "kd-distribution",
        "dimension": 3,
        "operands": { "states": { "psi": [[1.0, 0.0], [0.0, 0.0]] } }
    }"#;
    let err = run_scenario(ScenarioConfig::from_json(text).unwrap()).unwrap_err();
    match err {
        CliError::ConfigInvalid { path, .. } => assert!(path.starts_with("operands.states.psi"), "{path}"),
        other => panic!("{other}"),
    }
}

#[test]
fn report_document_round_trips() {
    let config = ScenarioConfig::load(&scenario("weak-value-qubit")).unwrap();
    let report = run_scenario(config).unwrap();
    let text = to_document(&report).unwrap();
    let back = from_document(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(to_document(&back).unwrap(), text);
}

#[test]
fn payload_is_identical_across_runs_and_excludes_timing() {
    let config = ScenarioConfig::load(&scenario("direct-kd-qubit-sampled")).unwrap();
    let a = run_scenario(config.clone()).unwrap();
    let b = run_scenario(config).unwrap();
    assert_eq!(a.payload().unwrap(), b.payload().unwrap());
    assert!(!a.payload().unwrap().contains("elapsed_seconds"));
    assert!(to_document(&a).unwrap().contains("elapsed_seconds"));
}

#[test]
fn table_has_one_row_per_check() {
    let report = run_scenario(ScenarioConfig::load(&scenario("identity-qubit-zx")).unwrap()).unwrap();
    let table = to_table(&report).unwrap();
    let mut rows = csv::Reader::from_reader(table.as_bytes());
    assert_eq!(rows.headers().unwrap().len(), 7);
    assert_eq!(rows.records().count(), report.checks.len());
}

#[test]
fn kd_qubit_distribution_matches_the_analytic_values() {
    let report = run_scenario(ScenarioConfig::load(&scenario("kd-qubit-zx")).unwrap()).unwrap();
    assert!(report.passed);
    let values = &report.distributions[0].values;
    let expected = [[0.25, -0.25], [0.25, 0.25], [0.25, 0.25], [0.25, -0.25]];
    let flat: Vec<[f64; 2]> = values.iter().flatten().copied().collect();
    assert_eq!(flat.len(), 4);
    for (got, want) in flat.iter().zip(expected) {
        assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12, "{got:?}");
    }
}

#[test]
fn run_writes_both_formats_and_exits_zero_on_pass() {
    let out = tempfile::tempdir().unwrap();
    let status = kdq()
        .arg("run")
        .arg(scenario("motion-qubit"))
        .args(["--format", "both", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let doc = std::fs::read_to_string(out.path().join("motion-qubit.report.json")).unwrap();
    assert!(from_document(&doc).unwrap().passed);
    assert!(out.path().join("motion-qubit.checks.csv").exists());
}

#[test]
fn failing_checks_exit_one() {
    let out = tempfile::tempdir().unwrap();
    let status = kdq()
        .arg("run")
        .arg(scenario("two-time-correlation"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&status.stdout).contains("FAIL two-time/"));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, r#"{"name":"broken","kind":"no-such-kind","dimension":2}"#).unwrap();
    for sub in ["run", "validate"] {
        let status = kdq().arg(sub).arg(&path).output().unwrap();
        assert_eq!(status.status.code(), Some(2), "{sub}");
    }
    let missing = kdq().arg("validate").arg(dir.path().join("absent.json")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn seed_override_changes_sampled_payload() {
    let base = tempfile::tempdir().unwrap();
    let other = tempfile::tempdir().unwrap();
    let path = scenario("direct-kd-qubit-sampled");
    for (dir, seed) in [(&base, "9"), (&other, "10")] {
        let status = kdq().arg("run").arg(&path).args(["--seed", seed, "--out"]).arg(dir.path()).output().unwrap();
        assert_eq!(status.status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| {
        from_document(&std::fs::read_to_string(d.path().join("direct-kd-qubit-sampled.report.json")).unwrap())
            .unwrap()
            .payload()
            .unwrap()
    };
    assert_ne!(read(&base), read(&other));
}

#[test]
fn list_scenarios_names_every_kind() {
    let out = kdq().arg("list-scenarios").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in kdq::ScenarioKind::ALL {
        assert!(text.contains(kind.name()), "{text}");
    }
}
