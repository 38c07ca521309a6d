//! Scoring of single raw profiles, shared by the HTTP service and the CLI.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use survwright_core::cohort::{CohortError, FeatureKind, RawCohort, RawValue, UnseenLevels};
use survwright_core::cox::DEFAULT_HORIZON_YEARS;
use thiserror::Error;

use crate::bundle::{BundleModel, ModelBundle, SexScope, Variant};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("missing required features: {}", .0.join(", "))]
    MissingFeatures(Vec<String>),
    #[error("unknown features: {}", .0.join(", "))]
    UnknownFeatures(Vec<String>),
    #[error("invalid value for '{feature}': {message}")]
    InvalidValue { feature: String, message: String },
    #[error("horizon_years must be positive and finite")]
    InvalidHorizon,
    #[error("{0}")]
    Model(String),
}

impl ScoreError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::MissingFeatures(_) => "missing_features",
            Self::UnknownFeatures(_) => "unknown_features",
            Self::InvalidValue { .. } => "invalid_value",
            Self::InvalidHorizon => "invalid_horizon",
            Self::Model(_) => "model_error",
        }
    }

    pub fn details(&self) -> Value {
        match self {
            Self::MissingFeatures(names) | Self::UnknownFeatures(names) => serde_json::json!({ "features": names }),
            Self::InvalidValue { feature, .. } => serde_json::json!({ "feature": feature }),
            _ => Value::Null,
        }
    }
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON_YEARS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub features: IndexMap<String, Value>,
    #[serde(default = "default_horizon")]
    pub horizon_years: f64,
    /// Impute missing required features instead of rejecting the request.
    #[serde(default)]
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub model: String,
    pub model_version: String,
    pub model_kind: String,
    pub variant: Variant,
    pub sex_scope: SexScope,
    pub horizon_years: f64,
    pub risk: f64,
    pub linear_predictor: f64,
    /// Per source feature, summed over its encoded columns. Cox only.
    pub contributions: Option<IndexMap<String, f64>>,
    /// True when the horizon lies beyond the last training time.
    pub extrapolated: bool,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    #[serde(flatten)]
    pub base: ScoreRequest,
    #[serde(default)]
    pub overrides: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub base: ScoreResponse,
    pub modified: ScoreResponse,
    pub delta: f64,
    /// Change in each feature's contribution. Cox only.
    pub contribution_deltas: Option<IndexMap<String, f64>>,
    pub overrides: Vec<String>,
}

/// Raw features a bundle needs: the source of every input column, with
/// derived columns replaced by their inputs. Schema order.
pub fn required_features(bundle: &ModelBundle) -> Result<Vec<String>, ScoreError> {
    let schema = bundle.schema();
    let meta = bundle.input_meta().map_err(|e| ScoreError::Model(e.to_string()))?;
    let mut needed = std::collections::HashSet::new();
    for m in meta {
        match schema.feature(&m.source) {
            Some(spec) if spec.kind == FeatureKind::Derived => needed.extend(spec.inputs.iter().cloned()),
            _ => {
                needed.insert(m.source.clone());
            }
        }
    }
    Ok(schema
        .source_features()
        .filter(|f| needed.contains(&f.name))
        .map(|f| f.name.clone())
        .collect())
}

fn to_raw_value(feature: &str, kind: FeatureKind, value: &Value) -> Result<Option<RawValue>, ScoreError> {
    let invalid = |message: &str| ScoreError::InvalidValue {
        feature: feature.to_string(),
        message: message.to_string(),
    };
    match value {
        Value::Null => Ok(None),
        Value::Bool(b) => Ok(Some(RawValue::Number(if *b { 1.0 } else { 0.0 }))),
        Value::Number(n) => {
            let x = n.as_f64().filter(|x| x.is_finite()).ok_or_else(|| invalid("not a finite number"))?;
            if kind.is_leveled() {
                Ok(Some(RawValue::Level(n.to_string())))
            } else {
                Ok(Some(RawValue::Number(x)))
            }
        }
        Value::String(s) if s.trim().is_empty() => Ok(None),
        Value::String(s) => Ok(Some(RawValue::Level(s.clone()))),
        _ => Err(invalid("expected a number, string, boolean or null")),
    }
}

fn cohort_error(e: CohortError) -> ScoreError {
    match e {
        CohortError::UnseenLevel { column, level } => ScoreError::InvalidValue {
            feature: column,
            message: format!("unknown level '{level}'"),
        },
        CohortError::Parse { column, value, .. } => ScoreError::InvalidValue {
            feature: column,
            message: format!("cannot parse '{value}'"),
        },
        other => ScoreError::Model(other.to_string()),
    }
}

/// Scores one profile through the bundle's own preprocessing path.
pub fn score(bundle: &ModelBundle, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
    if !(request.horizon_years > 0.0 && request.horizon_years.is_finite()) {
        return Err(ScoreError::InvalidHorizon);
    }
    let schema = bundle.schema();
    let mut unknown = Vec::new();
    let mut values: HashMap<String, Option<RawValue>> = HashMap::new();
    for (name, value) in &request.features {
        match schema.feature(name) {
            Some(spec) if spec.kind != FeatureKind::Derived => {
                values.insert(name.clone(), to_raw_value(name, spec.kind, value)?);
            }
            _ => unknown.push(name.clone()),
        }
    }
    if !unknown.is_empty() {
        return Err(ScoreError::UnknownFeatures(unknown));
    }
    let missing: Vec<String> = required_features(bundle)?
        .into_iter()
        .filter(|f| values.get(f).is_none_or(Option::is_none))
        .collect();
    let mut flags = Vec::new();
    if !missing.is_empty() {
        if !request.lenient {
            return Err(ScoreError::MissingFeatures(missing));
        }
        flags.extend(missing.iter().map(|f| format!("imputed:{f}")));
    }

    let raw = RawCohort::from_feature_map(schema, &values, "request").map_err(cohort_error)?;
    let unseen = if request.lenient {
        UnseenLevels::Lenient
    } else {
        UnseenLevels::Strict
    };
    let design = bundle
        .preprocessor
        .transform_source(&raw, unseen)
        .and_then(|d| d.select_named(&bundle.input_columns))
        .map_err(cohort_error)?;
    let row = design.values.row(0);
    let eta = bundle
        .model
        .scores(design.values.view())
        .map_err(|e| ScoreError::Model(e.to_string()))?[0];
    let prediction = bundle.model.risk_from_score(eta, request.horizon_years);
    if prediction.extrapolated {
        flags.push("extrapolated".into());
    }
    let contributions = match &bundle.model {
        BundleModel::Cox { fit } => {
            let mut by_feature: IndexMap<String, f64> = IndexMap::new();
            for ((meta, x), b) in design.column_meta.iter().zip(row.iter()).zip(&fit.beta) {
                *by_feature.entry(meta.source.clone()).or_default() += x * b;
            }
            Some(by_feature)
        }
        BundleModel::Neural { .. } => None,
    };
    Ok(ScoreResponse {
        model: bundle.id.clone(),
        model_version: bundle.version.clone(),
        model_kind: bundle.model.kind().into(),
        variant: bundle.variant,
        sex_scope: bundle.sex_scope,
        horizon_years: request.horizon_years,
        risk: prediction.risk,
        linear_predictor: eta,
        contributions,
        extrapolated: prediction.extrapolated,
        flags,
    })
}

/// Scores the base profile and the profile with `overrides` applied.
pub fn whatif(bundle: &ModelBundle, request: &WhatIfRequest) -> Result<WhatIfResponse, ScoreError> {
    let schema = bundle.schema();
    let unknown: Vec<String> = request
        .overrides
        .keys()
        .filter(|k| !matches!(schema.feature(k), Some(s) if s.kind != FeatureKind::Derived))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ScoreError::UnknownFeatures(unknown));
    }
    let base = score(bundle, &request.base)?;
    let mut changed = request.base.clone();
    for (k, v) in &request.overrides {
        changed.features.insert(k.clone(), v.clone());
    }
    let modified = score(bundle, &changed)?;
    let contribution_deltas = match (&base.contributions, &modified.contributions) {
        (Some(a), Some(b)) => Some(b.iter().map(|(k, v)| (k.clone(), v - a.get(k).copied().unwrap_or(0.0))).collect()),
        _ => None,
    };
    Ok(WhatIfResponse {
        delta: modified.risk - base.risk,
        base,
        modified,
        contribution_deltas,
        overrides: request.overrides.keys().cloned().collect(),
    })
}
