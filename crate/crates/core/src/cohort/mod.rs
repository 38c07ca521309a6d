//! Cohort ingestion and preprocessing.
//!
//! Raw CSV rows are loaded against a [`CohortSchema`], derived columns are
//! computed, missing values imputed with training-split statistics, and the
//! result is one-hot encoded and standardized into a [`DesignMatrix`].
//! Outcomes are carried separately as an [`OutcomeColumn`].

mod derive;
mod encode;
mod impute;
mod outcome;
mod raw;
mod schema;
mod split;
mod summary;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use derive::{derive_features, ZeroDenominators};
pub use encode::{
    encode, one_hot_name, prune_rare, ColumnMeta, DesignMatrix, Encoder, Encoding, Pruned, UnseenLevels,
    DEFAULT_MIN_PREVALENCE,
};
pub use impute::{impute_mean, FillValue, ImputationStats};
pub use outcome::{build_outcome, outcome_from_cohort, BuiltOutcome, OutcomeColumn, DAYS_PER_YEAR};
pub use raw::{load_cohort, write_cohort_csv, ColumnData, RawCohort, RawValue};
pub use schema::{
    parse_day, CohortSchema, Day, Derivation, ExclusionRule, FeatureKind, FeatureSpec, OutcomeSpec,
    SCHEMA_VERSION,
};
pub use split::{stratified_split, Split};
pub use summary::{summarize_cohort, CohortSummary, SummaryCell, SummaryRow};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("cannot parse '{value}' in column '{column}' at row {row}")]
    Parse { row: usize, column: String, value: String },
    #[error("missing value in column '{column}' at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("column '{0}' has no non-missing values")]
    AllMissing(String),
    #[error("unseen level '{level}' in column '{column}'")]
    UnseenLevel { column: String, level: String },
    #[error("outcome error: {0}")]
    Outcome(String),
    #[error("split error: {0}")]
    Split(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Data-quality findings from ingestion and preprocessing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rows_loaded: usize,
    pub rows_retained: usize,
    pub missing_counts: IndexMap<String, usize>,
    pub zero_denominators: IndexMap<String, usize>,
    pub dropped_rare: Vec<String>,
    pub excluded_subjects: Vec<String>,
}

/// A loaded cohort restricted to eligible subjects, with derived columns
/// computed and the outcome attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStore {
    pub schema: CohortSchema,
    pub raw: RawCohort,
    pub outcome: OutcomeColumn,
    pub quality: QualityReport,
}

impl CohortStore {
    /// Loads, derives and applies outcome exclusions.
    pub fn ingest<R: std::io::Read>(reader: R, schema: CohortSchema) -> Result<Self, CohortError> {
        let loaded = load_cohort(reader, &schema)?;
        Self::from_raw(loaded, schema)
    }

    pub fn from_raw(loaded: RawCohort, schema: CohortSchema) -> Result<Self, CohortError> {
        let (derived, zero_denominators) = derive_features(&loaded, &schema)?;
        let built = outcome_from_cohort(&derived, &schema)?;
        let raw = derived.select_rows(&built.included);
        let quality = QualityReport {
            rows_loaded: loaded.n_rows(),
            rows_retained: raw.n_rows(),
            missing_counts: raw
                .columns
                .iter()
                .map(|(k, c)| (k.clone(), c.missing_count()))
                .collect(),
            zero_denominators,
            dropped_rare: Vec::new(),
            excluded_subjects: built
                .excluded
                .iter()
                .map(|&i| derived.row_ids[i].clone())
                .collect(),
        };
        Ok(Self {
            schema,
            raw,
            outcome: built.outcome,
            quality,
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> (RawCohort, OutcomeColumn) {
        (self.raw.select_rows(rows), self.outcome.select(rows))
    }
}

/// Imputation and encoding fitted on one split and frozen for the others.
/// Serving reuses exactly this path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub schema: CohortSchema,
    pub imputation: ImputationStats,
    pub encoder: Encoder,
}

impl Preprocessor {
    /// Fits on a cohort that already carries its derived columns.
    pub fn fit(train: &RawCohort, schema: &CohortSchema) -> Result<Self, CohortError> {
        let imputation = ImputationStats::fit(train, schema)?;
        let complete = imputation.apply(train)?;
        let encoder = Encoder::fit(&complete, schema)?;
        Ok(Self {
            schema: schema.clone(),
            imputation,
            encoder,
        })
    }

    /// Imputes and encodes a cohort that already carries derived columns.
    pub fn transform(&self, raw: &RawCohort, unseen: UnseenLevels) -> Result<DesignMatrix, CohortError> {
        let complete = self.imputation.apply(raw)?;
        self.encoder.transform(&complete, unseen)
    }

    /// Full path from source columns: derive, impute, encode.
    pub fn transform_source(&self, raw: &RawCohort, unseen: UnseenLevels) -> Result<DesignMatrix, CohortError> {
        let (derived, _) = derive_features(raw, &self.schema)?;
        self.transform(&derived, unseen)
    }
}
