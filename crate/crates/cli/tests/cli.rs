use std::path::PathBuf;
use std::process::Command as Proc;

use gradeq_cli::report::Format;
use gradeq_cli::scenario::load_scenario_with;
use gradeq_cli::{export_scenario, load_scenario, parse_scenario, run_command, CliError, Command, RunConfig};
use gradeq_core::market::Scenario;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_gradeq"))
}

fn config(cmd: Command, scenario: &str, out: &std::path::Path) -> RunConfig {
    RunConfig { scenario_path: Some(fixture(scenario)), ..RunConfig::new(cmd, out) }
}

fn close(a: &Scenario, b: &Scenario, tol: f64) -> bool {
    let grid = (0..=1000).map(|i| i as f64 / 1000.0);
    let same_dist = |x: &gradeq_core::piecewise::PiecewisePowerDist, y: &gradeq_core::piecewise::PiecewisePowerDist| {
        grid.clone().all(|t| (x.cdf(t) - y.cdf(t)).abs() <= tol)
    };
    same_dist(&a.jobs, &b.jobs)
        && a.school_types.len() == b.school_types.len()
        && a.school_types.iter().zip(&b.school_types).all(|(p, q)| {
            (p.mass_fraction - q.mass_fraction).abs() <= tol && same_dist(&p.abilities, &q.abilities)
        })
        && a.welfare == b.welfare
        && (a.epsilon - b.epsilon).abs() <= tol
}

#[test]
fn bundled_uniform_loads() {
    let l = load_scenario(&fixture("uniform.scn")).unwrap();
    assert!(l.scenario.jobs.sup_deviation_from_uniform() < 1e-12);
    assert_eq!(l.scenario.school_types.len(), 1);
}

#[test]
fn example_job_masses_survive_loading() {
    let l = load_scenario(&fixture("example_1_11.scn")).unwrap();
    let j = &l.scenario.jobs;
    assert!((j.cdf(0.01) - 0.2).abs() < 1e-12);
    assert!((j.cdf(0.7) - j.cdf(0.6) - 0.45).abs() < 1e-12);
    assert!((1.0 - j.cdf(0.99) - 0.35).abs() < 1e-12);
    assert_eq!(l.scenario.epsilon, 1e-4);
}

#[test]
fn masses_off_by_a_tenth_are_rejected_with_path() {
    let text = r#"{"jobs": [{"lo": 0, "hi": 1, "mass": 0.9}], "schools": [{"pieces": [{"lo": 0, "hi": 1, "mass": 1}]}]}"#;
    match parse_scenario(text).unwrap().load_with(None) {
        Err(CliError::Validation { path, .. }) => assert_eq!(path, "jobs"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_keys_and_decreasing_welfare_are_rejected() {
    let extra = r#"{"jobs": [{"lo": 0, "hi": 1, "mass": 1, "shape": 2}], "schools": [{"pieces": [{"lo": 0, "hi": 1, "mass": 1}]}]}"#;
    assert!(parse_scenario(extra).is_err());
    let down = r#"{"jobs": [{"lo": 0, "hi": 1, "mass": 1}], "schools": [{"pieces": [{"lo": 0, "hi": 1, "mass": 1}]}],
        "welfare": {"g": {"points": [[0, 1], [1, 0]]}}}"#;
    match parse_scenario(down).unwrap().load_with(None) {
        Err(CliError::Validation { path, .. }) => assert_eq!(path, "welfare.g"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn exported_scenarios_reload_equal() {
    for name in ["uniform.scn", "example_1_11.scn", "power_x2.scn", "lowerbound.scn", "grading_example.scn"] {
        let l = load_scenario(&fixture(name)).unwrap();
        let file = export_scenario(&l.scenario).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back = parse_scenario(&text).unwrap().load_with(None).unwrap();
        assert!(close(&l.scenario, &back.scenario, 1e-12), "{name}");
    }
}

#[test]
fn epsilon_override_reaches_atoms() {
    let l = load_scenario_with(&fixture("lowerbound.scn"), Some(1e-4)).unwrap();
    assert_eq!(l.scenario.epsilon, 1e-4);
}

#[test]
fn poa_on_power_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_command(&config(Command::Poa, "power_x2.scn", dir.path())).unwrap();
    let poa = out.report["poa"].as_f64().unwrap();
    assert!((poa - 16.0 / 15.0).abs() < 1e-6, "{poa}");
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn reproduce_meets_stored_targets() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_command(&RunConfig::new(Command::Reproduce, dir.path())).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.report["examples"].as_array().unwrap().len(), 4);
}

#[test]
fn verify_rejects_non_convex_curve() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.json");
    std::fs::write(&curve, r#"{"points": [[0, 0], [0.5, 0.8], [1, 1]]}"#).unwrap();
    let status = bin()
        .args(["verify", "--scenario", fixture("uniform.scn").to_str().unwrap(), "--curve", curve.to_str().unwrap()])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(4));
    let report = std::fs::read_to_string(dir.path().join("verify.json")).unwrap();
    assert!(report.contains("\"convex\""));
    assert!(String::from_utf8_lossy(&status.stderr).contains("failed: convex"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, r#"{"jobs": [{"lo": 0, "hi": 1, "mass": 0.9}], "schools": [{"pieces": [{"lo": 0, "hi": 1, "mass": 1}]}]}"#)
        .unwrap();
    let out = dir.path().to_str().unwrap();
    let run = |args: &[&str]| bin().args(args).args(["--out", out]).output().unwrap();
    let r = run(&["truthful", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("jobs"));
    let r = run(&["poa", "--scenario", fixture("uniform.scn").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    let r = run(&["grading-eq", "--scenario", fixture("uniform.scn").to_str().unwrap(), "--delta", "-1"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn json_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for cmd in [Command::GradingEq, Command::EarlyEq] {
        let mut ca = config(cmd, "grading_example.scn", a.path());
        ca.overrides.seed = Some(42);
        let mut cb = ca.clone();
        cb.output_dir = b.path().to_path_buf();
        run_command(&ca).unwrap();
        run_command(&cb).unwrap();
        let name = format!("{}.json", cmd.name());
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn csv_and_svg_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Command::GradingEq, "power_x2.scn", dir.path());
    cfg.formats = vec![Format::Json, Format::Csv, Format::Svg];
    let out = run_command(&cfg).unwrap();
    assert_eq!(out.files.len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("grading-eq.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,q_truthful,q_equilibrium"));
    assert_eq!(lines.count(), 201);
    let svg = std::fs::read_to_string(dir.path().join("grading-eq.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.starts_with("<svg"));
}

#[test]
fn sweep_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Command::Sweep, dir.path());
    cfg.xs = Some(vec![1.0, 2.0, 4.0]);
    let out = run_command(&cfg).unwrap();
    assert!(out.failures.is_empty());
    let x = out.report["argmax_x"].as_f64().unwrap();
    assert!((x - 2.732).abs() < 1e-2);
}
