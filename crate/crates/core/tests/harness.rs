use lotts::harness::{load_config, run_experiment, validate_config, ExperimentKind};
use lotts::Error;
use serde_json::Value;
use std::path::{Path, PathBuf};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn validate(raw: &str, kind: ExperimentKind, sets: &[&str]) -> lotts::Result<lotts::harness::LoadedConfig> {
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    validate_config(raw, Some(kind), &sets, Path::new("."))
}

fn config_issues(err: Error) -> Vec<String> {
    match err {
        Error::Config(issues) => issues,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn guidance_after_window_start_is_reported_at_its_path() {
    let err = validate(r#"{"master_seed": 1, "resample": {"t0": 0.3, "t_g": 0.5}}"#, ExperimentKind::Testbed, &[])
        .unwrap_err();
    let issues = config_issues(err);
    assert!(issues.iter().any(|i| i.starts_with("resample.t_g")), "{issues:?}");
}

#[test]
fn zero_precision_is_rejected_with_a_message() {
    let err = validate(r#"{"master_seed": 1}"#, ExperimentKind::Theory, &["mask_stats.precision=0"]).unwrap_err();
    let issues = config_issues(err);
    assert!(issues.iter().any(|i| i.contains("mask_stats.precision")), "{issues:?}");
}

#[test]
fn every_issue_is_listed_at_once() {
    let err = validate(
        r#"{"master_seed": 1, "bogus": 1, "search": {"seeds": 0}}"#,
        ExperimentKind::Testbed,
        &["resample.t_g=2.0"],
    )
    .unwrap_err();
    let issues = config_issues(err);
    assert!(issues.len() >= 3, "{issues:?}");
    assert!(issues.iter().any(|i| i.contains("bogus")));
    assert!(issues.iter().any(|i| i.contains("search.seeds")));
}

#[test]
fn unknown_override_key_is_an_error() {
    let err = validate(r#"{"master_seed": 1}"#, ExperimentKind::Testbed, &["search.depth=3"]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn mismatched_experiment_kind_is_an_error() {
    let err = validate(r#"{"experiment": "theory", "master_seed": 1}"#, ExperimentKind::Scaling, &[]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_seed_warns_and_uses_zero() {
    let loaded = validate("{}", ExperimentKind::Theory, &[]).unwrap();
    assert_eq!(loaded.config.master_seed, 0);
    assert!(loaded.warnings.iter().any(|w| w.contains("master_seed")), "{:?}", loaded.warnings);
    let loaded = validate(r#"{"master_seed": 3}"#, ExperimentKind::Theory, &[]).unwrap();
    assert!(loaded.warnings.is_empty());
}

#[test]
fn infeasible_precision_maps_to_exit_code_three() {
    let loaded = validate(
        r#"{"master_seed": 1, "economy": {"patches": 20, "defects": 10}}"#,
        ExperimentKind::Theory,
        &["mask_stats.precision=0.1", "mask_stats.recall=1.0"],
    )
    .unwrap();
    let err = run_experiment(&loaded, 1).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn theory_report_carries_the_worked_economy() {
    let loaded = load_config(
        &configs().join("theory.json"),
        Some(ExperimentKind::Theory),
        &["theory.simulate_trials=20000".into(), "theory.bon_mc_trials=20000".into()],
    )
    .unwrap();
    let out = run_experiment(&loaded, 1).unwrap();
    let r = &out.report;
    assert_eq!(r["overrides"].as_array().unwrap().len(), 2);
    assert_eq!(r["config"]["theory"]["simulate_trials"], 20000);
    let a = &r["results"]["analysis"];
    assert!((a["dominance"]["margin"].as_f64().unwrap() - 3.4).abs() < 1e-12);
    assert_eq!(a["dominance"]["holds"], true);
    let rho = a["required_recall"].as_f64().unwrap();
    assert!((rho - 0.05 / 0.4875).abs() < 1e-12, "{rho}");
    assert!((a["per_trial"]["global"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((a["per_trial"]["local"].as_f64().unwrap() - 3.9).abs() < 1e-12);

    let mc = out.file("theory_mc.csv").unwrap();
    assert!(mc.starts_with("quantity,closed_form,estimate,stderr,z\n"));
    assert_eq!(mc.lines().count(), 7);
    let bon = out.file("bon_curve.csv").unwrap();
    assert!(bon.starts_with("n,repair_probability,normalized_gain\n"));
    assert_eq!(bon.lines().count(), 51);
}

#[test]
fn defect_free_testbed_shows_no_improvement() {
    let loaded = validate(
        r#"{"master_seed": 4, "trials": 150, "defects": {"min_count": 0, "max_count": 0, "magnitude": 0.0}}"#,
        ExperimentKind::Testbed,
        &[],
    )
    .unwrap();
    let out = run_experiment(&loaded, 0).unwrap();
    let imp = &out.report["results"]["improvement"];
    let z = imp["z"].as_f64().unwrap();
    assert!(z.abs() < 3.0, "improvement {imp}");
    let csv = out.file("testbed.csv").unwrap();
    assert!(csv.starts_with(
        "trial,defects,selected,true_positives,anchor_score,refined_score,improvement,search_score,search_nfe\n"
    ));
    assert_eq!(csv.lines().count(), 151);
}

#[test]
fn defective_testbed_refinement_helps() {
    let loaded = validate(
        r#"{"master_seed": 4, "trials": 120, "defects": {"min_count": 1, "max_count": 3, "magnitude": 2.0}}"#,
        ExperimentKind::Testbed,
        &["masks.source=\"oracle\""],
    )
    .unwrap();
    let out = run_experiment(&loaded, 0).unwrap();
    let r = &out.report["results"];
    assert!(r["improvement"]["z"].as_f64().unwrap() > 3.0, "{r}");
    assert_eq!(r["mask"]["precision"].as_f64().unwrap(), 1.0);
}

#[test]
fn scaling_rows_follow_the_grids() {
    let loaded = validate(
        r#"{"master_seed": 9, "trials": 40, "scaling": {"lotts_grid": [1, 3, 6, 9], "bon_grid": [1, 3, 6, 9, 12]}}"#,
        ExperimentKind::Scaling,
        &[],
    )
    .unwrap();
    let out = run_experiment(&loaded, 0).unwrap();
    let rows = out.report["results"]["rows"].as_array().unwrap();
    let of = |m: &str| -> Vec<&Value> { rows.iter().filter(|r| r["method"] == m).collect() };
    let (lotts, bon) = (of("lotts"), of("best_of_n"));
    assert_eq!(lotts.len(), 4);
    assert_eq!(bon.len(), 5);
    let means: Vec<f64> = bon.iter().map(|r| r["mean_score"].as_f64().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
    let n_of = |r: &&Value| r["N"].as_u64().or(r["n"].as_u64()).unwrap();
    assert_eq!(lotts.iter().map(n_of).collect::<Vec<_>>(), vec![1, 3, 6, 9]);
    assert_eq!(lotts[0]["mean_score"], bon[0]["mean_score"]);

    let csv = out.file("scaling.csv").unwrap();
    assert!(csv.starts_with("method,N,nfe,mean_score,stderr,trials\n"));
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn maskgen_recovers_the_example_region() {
    let loaded = load_config(&configs().join("maskgen.json"), Some(ExperimentKind::Maskgen), &[]).unwrap();
    let out = run_experiment(&loaded, 1).unwrap();
    assert_eq!(out.report["results"]["selected"], serde_json::json!([5, 6, 9, 10]));
    let mask: Value = serde_json::from_str(out.file("mask.json").unwrap()).unwrap();
    assert_eq!(mask["bits"].as_array().unwrap().iter().filter(|b| **b == 1).count(), 4);
}

#[test]
fn output_is_written_to_disk() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = validate(r#"{"master_seed": 2, "trials": 8}"#, ExperimentKind::Testbed, &[]).unwrap();
    let out = run_experiment(&loaded, 1).unwrap();
    out.write(dir.path()).unwrap();
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(Some(report.as_str()), out.file("report.json"));
    assert!(dir.path().join("testbed.csv").exists());
}
