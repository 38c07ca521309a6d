//! Persisted models: the fitted model, the frozen preprocessing path, and
//! the variant and scope it was trained for.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use survwright_core::cohort::{CohortSchema, ColumnMeta, Preprocessor};
use survwright_core::cox::{risk_from_eta, CoxFit, RiskPrediction};
use survwright_core::neural::{ForwardMode, NeuralCoxModel};
use thiserror::Error;

pub const BUNDLE_VERSION: u32 = 1;

/// Schema tags that drive the variant rules.
pub const CHOLESTEROL_TAG: &str = "cholesterol";
pub const BLOOD_PRESSURE_TAG: &str = "blood_pressure";
pub const HEART_RATE_TAG: &str = "heart_rate";
pub const SEX_TAG: &str = "sex";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("bundle_version {found} is not supported (expected {expected}); retrain or migrate the bundle")]
    Version { found: u32, expected: u32 },
    #[error("invalid bundle: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for BundleError {
    fn from(e: serde_json::Error) -> Self {
        Self::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Full uses every selected column. Digital drops cholesterol and systolic
/// blood pressure and adds heart rate in their place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Digital,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Digital => "digital",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SexScope {
    All,
    Male,
    Female,
}

impl SexScope {
    /// The sex level this scope keeps, if any.
    pub fn level(self) -> Option<&'static str> {
        match self {
            Self::All => None,
            Self::Male => Some("male"),
            Self::Female => Some("female"),
        }
    }
}

impl fmt::Display for SexScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.level().unwrap_or("all"))
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

impl FromStr for SexScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BundleModel {
    Cox { fit: CoxFit },
    Neural { model: NeuralCoxModel },
}

impl BundleModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Cox { .. } => "cox",
            Self::Neural { .. } => "deepsurv",
        }
    }

    pub fn input_columns(&self) -> &[String] {
        match self {
            Self::Cox { fit } => &fit.column_names,
            Self::Neural { model } => &model.input_columns,
        }
    }

    /// Log-risk scores for the rows of an encoded design.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, BundleError> {
        match self {
            Self::Cox { fit } => Ok(fit.linear_predictors(x)),
            Self::Neural { model } => model
                .forward(x, ForwardMode::Eval)
                .map_err(|e| BundleError::Invalid(e.to_string())),
        }
    }

    pub fn risk_from_score(&self, eta: f64, horizon: f64) -> RiskPrediction {
        let baseline = match self {
            Self::Cox { fit } => &fit.baseline_cumhaz,
            Self::Neural { model } => &model.baseline_cumhaz,
        };
        risk_from_eta(baseline, eta, horizon)
    }
}

/// How the bundle was trained, so evaluation can rebuild the same split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub split_seed: u64,
    pub n_train: usize,
    pub n_events_train: usize,
    #[serde(default)]
    pub dropped_rare: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_c_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub bundle_version: u32,
    pub id: String,
    pub version: String,
    pub created_at: String,
    pub variant: Variant,
    pub sex_scope: SexScope,
    pub input_columns: Vec<String>,
    pub preprocessor: Preprocessor,
    pub model: BundleModel,
    pub training: TrainingInfo,
}

/// Tags of the source feature behind an encoded column.
pub fn column_tags(schema: &CohortSchema, meta: &ColumnMeta) -> Vec<String> {
    schema.effective_tags(&meta.source)
}

impl ModelBundle {
    pub fn schema(&self) -> &CohortSchema {
        &self.preprocessor.schema
    }

    /// Encoder metadata of the model's input columns, in input order.
    pub fn input_meta(&self) -> Result<Vec<&ColumnMeta>, BundleError> {
        self.input_columns
            .iter()
            .map(|c| {
                self.preprocessor
                    .encoder
                    .columns
                    .iter()
                    .find(|m| &m.name == c)
                    .ok_or_else(|| BundleError::Invalid(format!("input column '{c}' is not produced by the encoder")))
            })
            .collect()
    }

    /// Checks the structural invariants that loading relies on.
    pub fn validate(&self) -> Result<(), BundleError> {
        if self.bundle_version != BUNDLE_VERSION {
            return Err(BundleError::Version {
                found: self.bundle_version,
                expected: BUNDLE_VERSION,
            });
        }
        if self.input_columns.is_empty() {
            return Err(BundleError::Invalid("no input columns".into()));
        }
        if self.model.input_columns() != self.input_columns.as_slice() {
            return Err(BundleError::Invalid("model columns differ from the bundle's input columns".into()));
        }
        let meta = self.input_meta()?;
        let schema = self.schema();
        if self.variant == Variant::Digital {
            for m in &meta {
                let tags = column_tags(schema, m);
                if tags.iter().any(|t| t == CHOLESTEROL_TAG || t == BLOOD_PRESSURE_TAG) {
                    return Err(BundleError::Invalid(format!(
                        "digital bundle contains excluded column '{}'",
                        m.name
                    )));
                }
            }
            if !meta.iter().any(|m| column_tags(schema, m).iter().any(|t| t == HEART_RATE_TAG)) {
                return Err(BundleError::Invalid("digital bundle has no heart rate column".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    /// Parses and validates a bundle document. The version is checked
    /// before the body so older layouts get a migration error rather than a
    /// field-level parse failure.
    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("bundle_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| BundleError::Invalid("missing bundle_version".into()))?;
        if found != u64::from(BUNDLE_VERSION) {
            return Err(BundleError::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: BUNDLE_VERSION,
            });
        }
        let bundle: Self = serde_json::from_str(text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
