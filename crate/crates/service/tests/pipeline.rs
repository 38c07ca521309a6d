mod common;

use std::collections::HashSet;
use std::process::Command;
use std::sync::OnceLock;

use common::store;
use proptest::prelude::*;
use serde_json::Value;
use survwright_core::cohort::CohortStore;
use survwright_service::bundle::{SexScope, Variant};
use survwright_service::pipeline::{
    candidate_columns, evaluate_bundle, partition, prepare, scope_rows, train_bundle, ModelKind, TrainConfig,
    TABLE_HEADER,
};

fn demo() -> &'static CohortStore {
    static S: OnceLock<CohortStore> = OnceLock::new();
    S.get_or_init(|| store(3000, 8))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partitions_are_disjoint_covers_of_the_scope(seed in any::<u64>(), scope in prop_oneof![
        Just(SexScope::All), Just(SexScope::Male), Just(SexScope::Female)
    ]) {
        let s = demo();
        let p = partition(s, scope, seed).unwrap();
        let mut all: Vec<usize> = p.train.iter().chain(&p.val).chain(&p.test).copied().collect();
        all.sort_unstable();
        let n = all.len();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(all, scope_rows(s, scope).unwrap());
        // 75/25 then 75/25 again, up to stratum rounding
        let frac = |k: usize| k as f64 / n as f64;
        prop_assert!((frac(p.test.len()) - 0.25).abs() < 0.01);
        prop_assert!((frac(p.train.len()) - 0.5625).abs() < 0.01);
        let rate = |rows: &[usize]| rows.iter().filter(|&&r| s.outcome.event[r]).count() as f64 / rows.len() as f64;
        prop_assert!((rate(&p.test) - rate(&p.development())).abs() < 0.01);
    }
}

#[test]
fn sex_scopes_split_the_cohort() {
    let s = demo();
    let male = scope_rows(s, SexScope::Male).unwrap();
    let female = scope_rows(s, SexScope::Female).unwrap();
    assert!(!male.is_empty() && !female.is_empty());
    assert!(male.iter().all(|r| !female.contains(r)));
    let sex = s.raw.column("sex").unwrap().as_levels().unwrap();
    assert!(male.iter().all(|&r| sex[r].as_deref() == Some("male")));
    let missing = sex.iter().filter(|v| v.is_none()).count();
    assert_eq!(male.len() + female.len() + missing, s.raw.n_rows());
}

#[test]
fn variant_and_scope_rules_on_candidate_columns() {
    let s = demo();
    let part = partition(s, SexScope::All, 0).unwrap();
    let prepared = prepare(s, &part.development(), 0.001).unwrap();
    let design = &prepared.design;
    let base: Vec<String> = ["age", "sex=male", "sbp", "total_cholesterol", "cholesterol_ratio", "pack_years"]
        .map(String::from)
        .to_vec();

    // design order: derived columns come after the source columns
    let full = candidate_columns(s, design, Some(&base), Variant::Full, SexScope::All).unwrap();
    assert_eq!(full, ["age", "sex=male", "sbp", "total_cholesterol", "pack_years", "cholesterol_ratio"]);

    let digital = candidate_columns(s, design, Some(&base), Variant::Digital, SexScope::All).unwrap();
    assert_eq!(digital, ["age", "sex=male", "heart_rate", "pack_years"]);

    let male = candidate_columns(s, design, Some(&base), Variant::Full, SexScope::Male).unwrap();
    assert!(!male.iter().any(|c| c.starts_with("sex")));

    let everything = candidate_columns(s, design, None, Variant::Digital, SexScope::Female).unwrap();
    let names: HashSet<&str> = everything.iter().map(String::as_str).collect();
    for gone in ["sbp", "total_cholesterol", "hdl_cholesterol", "cholesterol_ratio", "sex=male", "sex=female"] {
        assert!(!names.contains(gone), "{gone}");
    }
    assert!(names.contains("heart_rate"));
    for d in &prepared.dropped {
        assert!(design.column_index(d).is_none(), "{d}");
    }
}

#[test]
fn training_sees_only_development_rows_and_evaluation_is_reproducible() {
    let s = demo();
    let config = TrainConfig {
        seed: 3,
        features: Some(common::COLUMNS.iter().map(|c| c.to_string()).collect()),
        ..TrainConfig::default()
    };
    let bundle = train_bundle(s, &config).unwrap();
    let part = partition(s, SexScope::All, 3).unwrap();
    assert_eq!(bundle.training.n_train, part.development().len());
    assert_eq!(bundle.id, "cox-full-all");

    let a = evaluate_bundle(&bundle, s, 50, 9).unwrap();
    let b = evaluate_bundle(&bundle, s, 50, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.report.n, part.test.len());
    assert_eq!(a.table_row.split('\t').count(), TABLE_HEADER.split('\t').count());
    assert!(a.table_row.starts_with("CPH (full, all)\t13\t"));
    assert_eq!(a.calibration_csv.lines().count(), 11);
}

#[test]
fn neural_bundles_record_validation_discrimination() {
    let s = demo();
    let mut config = common::config(ModelKind::Deepsurv, Variant::Full);
    config.scope = SexScope::Female;
    config.features = Some(common::COLUMNS.iter().filter(|c| !c.starts_with("sex")).map(|c| c.to_string()).collect());
    let bundle = train_bundle(s, &config).unwrap();
    assert_eq!(bundle.id, "deepsurv-full-female");
    let c = bundle.training.validation_c_index.unwrap();
    assert!(c > 0.5 && c <= 1.0, "{c}");
}

fn cli(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_survwright"))
        .args(args)
        .env("SURVWRIGHT_LOG", "error")
        .output()
        .unwrap();
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn cli_reports_errors_as_json_with_failure_status() {
    let (ok, _, err) = cli(&["score", "--bundle", "/nonexistent/bundle.json", "--request", "-"]);
    assert!(!ok);
    let v: Value = serde_json::from_str(err.trim().lines().last().unwrap()).unwrap();
    assert_eq!(v["error"]["code"], "bundle_error");
    assert!(v["error"]["message"].as_str().unwrap().contains("/nonexistent/bundle.json"));
}

#[test]
fn cli_synth_train_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name).to_string_lossy().into_owned();
    let (ok, _, err) = cli(&["--seed", "4", "synth", "--n", "1500", "--out-dir", &p("")]);
    assert!(ok, "{err}");
    let cohort = ["--data", &p("cohort.csv"), "--schema", &p("schema.json")];
    let features = serde_json::to_string(&common::COLUMNS).unwrap();
    std::fs::write(p("features.json"), features).unwrap();
    let (features_path, bundle_path) = (p("features.json"), p("b.json"));
    let mut train = vec!["train"];
    train.extend(cohort);
    train.extend(["--variant", "digital", "--features", &features_path, "--out", &bundle_path]);
    let (ok, out, err) = cli(&train);
    assert!(ok, "{err}");
    let summary: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["id"], "cox-digital-all");

    let request = serde_json::json!({ "features": common::profile() });
    std::fs::write(p("req.json"), request.to_string()).unwrap();
    let (ok, out, err) = cli(&["score", "--bundle", &p("b.json"), "--request", &p("req.json")]);
    assert!(ok, "{err}");
    let scored: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(scored["variant"], "digital");
    assert!(scored["risk"].as_f64().unwrap() > 0.0);

    std::fs::write(p("bad.json"), r#"{"features": {"age": 50}}"#).unwrap();
    let (ok, _, err) = cli(&["score", "--bundle", &p("b.json"), "--request", &p("bad.json")]);
    assert!(!ok);
    assert!(err.contains("\"code\":\"missing_features\""), "{err}");
}
