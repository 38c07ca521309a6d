//! Train, select, evaluate and compare on a loaded cohort. The CLI is a
//! thin shell over these functions.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use survwright_core::cohort::{
    prune_rare, stratified_split, CohortError, CohortStore, DesignMatrix, OutcomeColumn, Preprocessor, UnseenLevels,
    DEFAULT_MIN_PREVALENCE,
};
use survwright_core::cox::{fit_cox, summarize, CoxError, CoxOptions, CoxSummary, DEFAULT_HORIZON_YEARS};
use survwright_core::framingham::{
    compare_scores, derive_framingham_inputs, framingham_risk, CoefficientSet, CompareOptions, ComparisonReport,
    FraminghamError, FraminghamFields, RefitModels, ScoreColumn, Sex,
};
use survwright_core::metrics::{calibration_csv, concordance_index, evaluate, EvalOptions, EvalReport, MetricsError};
use survwright_core::neural::{train, HyperConfig, NeuralCoxModel, NeuralError, Topology, TrainOptions};
use survwright_core::search::{search, SearchData, SearchError, SearchOptions, SearchOutcome, SearchSpace};
use survwright_core::selection::{run_selection, SelectionData, SelectionError, SelectionOptions, SelectionTrace};
use thiserror::Error;

use crate::bundle::{
    BundleError, BundleModel, ModelBundle, SexScope, TrainingInfo, Variant, BLOOD_PRESSURE_TAG, BUNDLE_VERSION,
    CHOLESTEROL_TAG, HEART_RATE_TAG, SEX_TAG,
};

/// Share of subjects in the development part of each split.
pub const TRAIN_FRACTION: f64 = 0.75;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Cox(#[from] CoxError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Framingham(#[from] FraminghamError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("{0}")]
    Invalid(String),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Cohort(_) => "cohort_error",
            Self::Cox(_) => "cox_error",
            Self::Neural(_) => "neural_error",
            Self::Selection(_) => "selection_error",
            Self::Search(_) => "search_error",
            Self::Metrics(_) => "metrics_error",
            Self::Framingham(_) => "framingham_error",
            Self::Bundle(_) => "bundle_error",
            Self::Invalid(_) => "invalid_argument",
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cox,
    Deepsurv,
}

/// Row indices into the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partition {
    /// Train and validation together.
    pub fn development(&self) -> Vec<usize> {
        let mut rows = [self.train.as_slice(), self.val.as_slice()].concat();
        rows.sort_unstable();
        rows
    }
}

/// Rows belonging to `scope`, identified through the feature tagged `sex`.
pub fn scope_rows(store: &CohortStore, scope: SexScope) -> Result<Vec<usize>> {
    let Some(level) = scope.level() else {
        return Ok((0..store.raw.n_rows()).collect());
    };
    let feature = store
        .schema
        .features
        .iter()
        .find(|f| f.has_tag(SEX_TAG))
        .ok_or_else(|| PipelineError::Invalid("no feature is tagged 'sex'; cannot scope by sex".into()))?;
    let levels = store
        .raw
        .column(&feature.name)
        .and_then(|c| c.as_levels())
        .ok_or_else(|| PipelineError::Invalid(format!("'{}' is not a leveled column", feature.name)))?;
    let rows: Vec<usize> = levels
        .iter()
        .enumerate()
        .filter(|(_, v)| v.as_deref().is_some_and(|s| s.eq_ignore_ascii_case(level)))
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        return Err(PipelineError::Invalid(format!("no subjects with {} = {level}", feature.name)));
    }
    Ok(rows)
}

/// 75/25 development/test split stratified on the event, then 75/25
/// train/validation within development.
pub fn partition(store: &CohortStore, scope: SexScope, seed: u64) -> Result<Partition> {
    let rows = scope_rows(store, scope)?;
    let outcome = store.outcome.select(&rows);
    let outer = stratified_split(&outcome, TRAIN_FRACTION, seed)?;
    let inner = stratified_split(&outcome.select(&outer.first), TRAIN_FRACTION, seed.wrapping_add(1))?;
    let dev: Vec<usize> = outer.first.iter().map(|&i| rows[i]).collect();
    Ok(Partition {
        train: inner.first.iter().map(|&i| dev[i]).collect(),
        val: inner.second.iter().map(|&i| dev[i]).collect(),
        test: outer.second.iter().map(|&i| rows[i]).collect(),
    })
}

/// Preprocessing fitted on some rows, applied to the whole store.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub preprocessor: Preprocessor,
    /// Every store row, rare columns removed.
    pub design: DesignMatrix,
    pub dropped: Vec<String>,
}

pub fn prepare(store: &CohortStore, fit_rows: &[usize], min_prevalence: f64) -> Result<Prepared> {
    let preprocessor = Preprocessor::fit(&store.raw.select_rows(fit_rows), &store.schema)?;
    let design = preprocessor.transform(&store.raw, UnseenLevels::Strict)?;
    let pruned = prune_rare(&design.select_rows(fit_rows), min_prevalence);
    let design = design.select_named(&pruned.design.column_names)?;
    Ok(Prepared {
        preprocessor,
        design,
        dropped: pruned.dropped,
    })
}

fn tags_of(store: &CohortStore, design: &DesignMatrix, column: &str) -> Vec<String> {
    design
        .column_index(column)
        .map(|j| store.schema.effective_tags(&design.column_meta[j].source))
        .unwrap_or_default()
}

/// Applies the scope and variant rules to a base column list. Output keeps
/// design order.
pub fn candidate_columns(
    store: &CohortStore,
    design: &DesignMatrix,
    base: Option<&[String]>,
    variant: Variant,
    scope: SexScope,
) -> Result<Vec<String>> {
    let mut chosen: HashSet<String> = match base {
        Some(names) => {
            for n in names.iter().filter(|n| design.column_index(n).is_none()) {
                log::warn!("selected column '{n}' is not in the design (pruned or unknown); skipped");
            }
            names.iter().filter(|n| design.column_index(n).is_some()).cloned().collect()
        }
        None => design.column_names.iter().cloned().collect(),
    };
    let has = |col: &str, tag: &str| tags_of(store, design, col).iter().any(|t| t == tag);
    if scope != SexScope::All {
        chosen.retain(|c| !has(c, SEX_TAG));
    }
    if variant == Variant::Digital {
        chosen.retain(|c| !has(c, CHOLESTEROL_TAG) && !has(c, BLOOD_PRESSURE_TAG));
        let heart: Vec<&String> = design.column_names.iter().filter(|c| has(c, HEART_RATE_TAG)).collect();
        if heart.is_empty() {
            return Err(PipelineError::Invalid("the digital variant needs a column tagged 'heart_rate'".into()));
        }
        chosen.extend(heart.into_iter().cloned());
    }
    let ordered: Vec<String> = design.column_names.iter().filter(|c| chosen.contains(*c)).cloned().collect();
    if ordered.is_empty() {
        return Err(PipelineError::Invalid("no input columns remain".into()));
    }
    Ok(ordered)
}

fn rows_of(design: &DesignMatrix, outcome: &OutcomeColumn, rows: &[usize], cols: &[String]) -> Result<(DesignMatrix, OutcomeColumn)> {
    Ok((design.select_rows(rows).select_named(cols)?, outcome.select(rows)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub scope: SexScope,
    pub seed: u64,
    pub min_prevalence: f64,
    pub options: SelectionOptions,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            scope: SexScope::All,
            seed: 0,
            min_prevalence: DEFAULT_MIN_PREVALENCE,
            options: SelectionOptions::default(),
        }
    }
}

/// Feature selection on the train/validation part of the split.
pub fn select_features(store: &CohortStore, config: &SelectConfig) -> Result<SelectionTrace> {
    let part = partition(store, config.scope, config.seed)?;
    let prepared = prepare(store, &part.train, config.min_prevalence)?;
    let cols = candidate_columns(store, &prepared.design, None, Variant::Full, config.scope)?;
    let (train_x, train_y) = rows_of(&prepared.design, &store.outcome, &part.train, &cols)?;
    let (val_x, val_y) = rows_of(&prepared.design, &store.outcome, &part.val, &cols)?;
    let data = SelectionData {
        train: &train_x,
        train_y: &train_y,
        val: &val_x,
        val_y: &val_y,
    };
    Ok(run_selection(&data, &config.options)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub variant: Variant,
    pub scope: SexScope,
    pub seed: u64,
    /// Selected columns; `None` uses every unpruned column.
    pub features: Option<Vec<String>>,
    pub min_prevalence: f64,
    pub cox: CoxOptions,
    pub hyper: HyperConfig,
    pub train: TrainOptions,
    pub id: Option<String>,
    pub version: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Cox,
            variant: Variant::Full,
            scope: SexScope::All,
            seed: 0,
            features: None,
            min_prevalence: DEFAULT_MIN_PREVALENCE,
            cox: CoxOptions::default(),
            hyper: HyperConfig::reported_reduced(),
            train: TrainOptions::default(),
            id: None,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

fn default_id(kind: ModelKind, variant: Variant, scope: SexScope) -> String {
    let kind = match kind {
        ModelKind::Cox => "cox",
        ModelKind::Deepsurv => "deepsurv",
    };
    format!("{kind}-{variant}-{scope}")
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    config_id: Option<String>,
    kind: ModelKind,
    variant: Variant,
    scope: SexScope,
    version: &str,
    prepared: Prepared,
    model: BundleModel,
    training: TrainingInfo,
) -> Result<ModelBundle> {
    let bundle = ModelBundle {
        bundle_version: BUNDLE_VERSION,
        id: config_id.unwrap_or_else(|| default_id(kind, variant, scope)),
        version: version.to_string(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        variant,
        sex_scope: scope,
        input_columns: model.input_columns().to_vec(),
        preprocessor: prepared.preprocessor,
        model,
        training,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Fits a Cox model on the development rows or trains a neural model on
/// train with early stopping on validation. Test rows are never touched.
pub fn train_bundle(store: &CohortStore, config: &TrainConfig) -> Result<ModelBundle> {
    let part = partition(store, config.scope, config.seed)?;
    let dev = part.development();
    let prepared = prepare(store, &dev, config.min_prevalence)?;
    let cols = candidate_columns(store, &prepared.design, config.features.as_deref(), config.variant, config.scope)?;
    let (model, training) = match config.model {
        ModelKind::Cox => {
            let (x, y) = rows_of(&prepared.design, &store.outcome, &dev, &cols)?;
            let fit = fit_cox(&x, &y, config.cox)?;
            let info = TrainingInfo {
                split_seed: config.seed,
                n_train: y.len(),
                n_events_train: y.n_events(),
                dropped_rare: prepared.dropped.clone(),
                validation_c_index: None,
            };
            (BundleModel::Cox { fit }, info)
        }
        ModelKind::Deepsurv => {
            let (tx, ty) = rows_of(&prepared.design, &store.outcome, &part.train, &cols)?;
            let (vx, vy) = rows_of(&prepared.design, &store.outcome, &part.val, &cols)?;
            let model = NeuralCoxModel::new(config.hyper.clone(), cols.clone(), config.seed)?;
            let options = TrainOptions {
                seed: config.seed,
                ..config.train
            };
            let model = train(model, tx.values.view(), &ty, vx.values.view(), &vy, &options)?;
            let eta = model.network.predict(vx.values.view());
            let info = TrainingInfo {
                split_seed: config.seed,
                n_train: ty.len(),
                n_events_train: ty.n_events(),
                dropped_rare: prepared.dropped.clone(),
                validation_c_index: concordance_index(&eta, &vy.duration, &vy.event).ok(),
            };
            (BundleModel::Neural { model }, info)
        }
    };
    assemble(config.id.clone(), config.model, config.variant, config.scope, &config.version, prepared, model, training)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub variant: Variant,
    pub scope: SexScope,
    pub seed: u64,
    pub features: Option<Vec<String>>,
    pub min_prevalence: f64,
    pub budget: usize,
    pub train: TrainOptions,
    /// Restricts the topology dimension; `None` searches all of them.
    pub topologies: Option<Vec<Topology>>,
    pub id: Option<String>,
    pub version: String,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            scope: SexScope::All,
            seed: 0,
            features: None,
            min_prevalence: DEFAULT_MIN_PREVALENCE,
            budget: 20,
            train: TrainOptions::default(),
            topologies: None,
            id: None,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Random search over neural configurations; the best trial becomes a bundle.
pub fn search_bundle(store: &CohortStore, config: &SearchConfig) -> Result<(ModelBundle, SearchOutcome)> {
    let part = partition(store, config.scope, config.seed)?;
    let prepared = prepare(store, &part.development(), config.min_prevalence)?;
    let cols = candidate_columns(store, &prepared.design, config.features.as_deref(), config.variant, config.scope)?;
    let (tx, ty) = rows_of(&prepared.design, &store.outcome, &part.train, &cols)?;
    let (vx, vy) = rows_of(&prepared.design, &store.outcome, &part.val, &cols)?;
    let space = match &config.topologies {
        Some(t) => SearchSpace::with_topologies(t.clone())?,
        None => SearchSpace::default(),
    };
    let data = SearchData {
        train_x: tx.values.view(),
        train_y: &ty,
        val_x: vx.values.view(),
        val_y: &vy,
        input_columns: &cols,
    };
    let options = SearchOptions {
        budget: config.budget,
        seed: config.seed,
        train: config.train,
    };
    let outcome = search(&space, &data, &options)?;
    let training = TrainingInfo {
        split_seed: config.seed,
        n_train: ty.len(),
        n_events_train: ty.n_events(),
        dropped_rare: prepared.dropped.clone(),
        validation_c_index: outcome.best().val_cindex,
    };
    let bundle = assemble(
        config.id.clone(),
        ModelKind::Deepsurv,
        config.variant,
        config.scope,
        &config.version,
        prepared,
        BundleModel::Neural {
            model: outcome.best_model.clone(),
        },
        training,
    )?;
    Ok((bundle, outcome))
}

/// Test-split evaluation of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub model: String,
    pub model_kind: String,
    pub variant: Variant,
    pub sex_scope: SexScope,
    pub n_features: usize,
    pub report: EvalReport,
    /// `0.7443 [0.7441 – 0.7445]`
    pub c_index_text: String,
    pub ici_text: String,
    /// One tab-separated row: model, features, c-index with interval, ICI.
    pub table_row: String,
    pub calibration_csv: String,
}

pub const TABLE_HEADER: &str = "Model\tFeatures\tC-index [95% CI]\tICI";

/// Encoded test rows of the bundle's own split.
pub fn test_design(bundle: &ModelBundle, store: &CohortStore) -> Result<(DesignMatrix, OutcomeColumn)> {
    let part = partition(store, bundle.sex_scope, bundle.training.split_seed)?;
    let raw = store.raw.select_rows(&part.test);
    let design = bundle
        .preprocessor
        .transform(&raw, UnseenLevels::Strict)?
        .select_named(&bundle.input_columns)?;
    Ok((design, store.outcome.select(&part.test)))
}

pub fn evaluate_bundle(bundle: &ModelBundle, store: &CohortStore, rounds: usize, seed: u64) -> Result<EvalSummary> {
    let (design, outcome) = test_design(bundle, store)?;
    let scores = bundle.model.scores(design.values.view())?;
    let horizon = DEFAULT_HORIZON_YEARS;
    let risks: Vec<f64> = scores.iter().map(|&s| bundle.model.risk_from_score(s, horizon).risk).collect();
    let options = EvalOptions {
        rounds,
        seed,
        horizon,
        ..EvalOptions::default()
    };
    let report = evaluate(&scores, &risks, &outcome, &options)?;
    let label = match bundle.model {
        BundleModel::Cox { .. } => "CPH",
        BundleModel::Neural { .. } => "DeepSurv",
    };
    let table_row = format!(
        "{label} ({}, {})\t{}\t{}\t{}",
        bundle.variant,
        bundle.sex_scope,
        bundle.input_columns.len(),
        report.c_index_text(),
        report.ici_text()
    );
    Ok(EvalSummary {
        model: bundle.id.clone(),
        model_kind: bundle.model.kind().into(),
        variant: bundle.variant,
        sex_scope: bundle.sex_scope,
        n_features: bundle.input_columns.len(),
        c_index_text: report.c_index_text(),
        ici_text: report.ici_text(),
        calibration_csv: calibration_csv(&report.calibration_bins),
        table_row,
        report,
    })
}

/// Coefficient table of a Cox bundle, largest log hazard ratio first.
pub fn coefficient_table(bundle: &ModelBundle) -> Option<CoxSummary> {
    match &bundle.model {
        BundleModel::Cox { fit } => Some(summarize(fit).sorted_by_log_hr()),
        BundleModel::Neural { .. } => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FraminghamSummary {
    pub n_eligible: usize,
    pub n_excluded: usize,
    pub n_test: usize,
    pub report: ComparisonReport,
    pub table: String,
}

/// Published-formula and refit Framingham scores on the test split, the
/// refit fitted on the development split.
pub fn framingham_comparison(
    store: &CohortStore,
    fields: &FraminghamFields,
    coefficients: &CoefficientSet,
    rounds: usize,
    seed: u64,
) -> Result<FraminghamSummary> {
    let cohort = derive_framingham_inputs(&store.raw, fields);
    let outcome = store.outcome.select(&cohort.rows);
    let split = stratified_split(&outcome, TRAIN_FRACTION, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| cohort.inputs[i]).collect::<Vec<_>>();
    let (dev, test) = (pick(&split.first), pick(&split.second));
    let test_y = outcome.select(&split.second);
    let refit = RefitModels::fit(&dev, &outcome.select(&split.first), CoxOptions::default())?;
    let formula: Vec<f64> = test
        .iter()
        .map(|i| framingham_risk(i, coefficients))
        .collect::<std::result::Result<_, _>>()?;
    let refitted = refit.risks(&test, DEFAULT_HORIZON_YEARS)?;
    let sexes: Vec<Sex> = test.iter().map(|i| i.sex).collect();
    let report = compare_scores(
        &[
            ScoreColumn {
                score: "Framingham",
                method: "Published formula",
                risks: &formula,
            },
            ScoreColumn {
                score: "Framingham",
                method: "Refit Cox",
                risks: &refitted,
            },
        ],
        &sexes,
        &test_y.duration,
        &test_y.event,
        &CompareOptions {
            rounds,
            seed,
            ..CompareOptions::default()
        },
    )?;
    Ok(FraminghamSummary {
        n_eligible: cohort.inputs.len(),
        n_excluded: cohort.excluded.len(),
        n_test: test.len(),
        table: report.to_table(),
        report,
    })
}
