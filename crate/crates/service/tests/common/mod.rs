#![allow(dead_code)]

use indexmap::IndexMap;
use serde_json::{json, Value};
use survwright_core::cohort::{write_cohort_csv, CohortStore, ColumnData};
use survwright_core::neural::{HyperConfig, TrainOptions};
use survwright_core::synth::{generate_cohort_like, CohortTemplate};
use survwright_service::bundle::{ModelBundle, Variant};
use survwright_service::pipeline::{train_bundle, ModelKind, TrainConfig};

pub const COLUMNS: [&str; 13] = [
    "age",
    "sex=male",
    "waist",
    "hip",
    "sbp",
    "heart_rate",
    "hdl_cholesterol",
    "bp_medication",
    "no_current_smoking",
    "pack_years",
    "chest_pain",
    "self_rated_health=poor",
    "cholesterol_ratio",
];

/// A demo cohort pushed through CSV, as the CLI would load it.
pub fn store(n: usize, seed: u64) -> CohortStore {
    let cohort = generate_cohort_like(&CohortTemplate::cardio_demo(n, seed)).unwrap();
    let mut csv = Vec::new();
    write_cohort_csv(&mut csv, &cohort.raw, &cohort.schema).unwrap();
    CohortStore::ingest(csv.as_slice(), cohort.schema).unwrap()
}

pub fn config(model: ModelKind, variant: Variant) -> TrainConfig {
    TrainConfig {
        model,
        variant,
        seed: 5,
        features: Some(COLUMNS.iter().map(|s| s.to_string()).collect()),
        hyper: HyperConfig::simple(&[8]),
        train: TrainOptions {
            max_epochs: 30,
            ..TrainOptions::default()
        },
        ..TrainConfig::default()
    }
}

pub fn bundle(store: &CohortStore, model: ModelKind, variant: Variant) -> ModelBundle {
    train_bundle(store, &config(model, variant)).unwrap()
}

/// Source feature values of one stored subject as a request body.
pub fn features_of(store: &CohortStore, row: usize) -> IndexMap<String, Value> {
    store
        .schema
        .source_features()
        .map(|spec| {
            let v = match store.raw.column(&spec.name).unwrap() {
                ColumnData::Numeric(v) => v[row].map_or(Value::Null, |x| json!(x)),
                ColumnData::Levels(v) => v[row].clone().map_or(Value::Null, Value::String),
            };
            (spec.name.clone(), v)
        })
        .collect()
}

/// A complete profile for the demo schema.
pub fn profile() -> IndexMap<String, Value> {
    let v = json!({
        "age": 61, "sex": "male", "waist": 90, "hip": 100, "sbp": 140, "heart_rate": 70,
        "total_cholesterol": 5.8, "hdl_cholesterol": 1.2, "bp_medication": 0,
        "no_current_smoking": 0, "pack_years": 20, "chest_pain": false, "self_rated_health": "fair"
    });
    serde_json::from_value(v).unwrap()
}
