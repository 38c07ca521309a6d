//! Feature selection: univariate Wald filter, batched backward elimination
//! guarded by validation c-index, then a manual exclusion list.

use indexmap::IndexMap;
use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{DesignMatrix, OutcomeColumn};
use crate::cox::{fit_cox_values, CoxError, CoxFit, CoxOptions};
use crate::metrics::concordance_index;
use crate::stats::two_sided_normal_p;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_CINDEX_TOL: f64 = 0.001;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("backward elimination needs at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("train and validation designs have different columns")]
    ColumnMismatch,
    #[error("unknown feature '{0}'")]
    UnknownFeature(String),
    #[error("validation c-index is undefined (no comparable pairs)")]
    UndefinedCIndex,
    #[error("cox fit on the current feature set failed: {0}")]
    Fit(#[from] CoxError),
}

/// One tentative removal during backward elimination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub batch_size: usize,
    /// Removal candidates, weakest |z| first.
    pub candidates: Vec<String>,
    pub c_index_before: f64,
    /// `None` when the reduced model could not be fit.
    pub c_index_after: Option<f64>,
    pub committed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub features_before: usize,
    pub removed: Vec<String>,
    /// Validation c-index of a Cox model on the stage input and output.
    pub c_index_before: Option<f64>,
    pub c_index_after: Option<f64>,
    /// Univariate Wald p-values, where applicable.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub p_values: IndexMap<String, f64>,
    /// Reason per removed feature when it is not a plain threshold.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub reasons: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<EliminationStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl StageRecord {
    fn new(stage: &str, features_before: usize) -> Self {
        Self {
            stage: stage.into(),
            features_before,
            removed: Vec::new(),
            c_index_before: None,
            c_index_after: None,
            p_values: IndexMap::new(),
            reasons: IndexMap::new(),
            steps: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub initial_features: Vec<String>,
    pub stages: Vec<StageRecord>,
    pub final_features: Vec<String>,
}

impl SelectionTrace {
    /// `608 -> 515 (univariate) -> 50 (backward) -> 47 (exclusion)`.
    pub fn summary(&self) -> String {
        let mut out = self.initial_features.len().to_string();
        let mut n = self.initial_features.len();
        for s in &self.stages {
            n -= s.removed.len();
            out.push_str(&format!(" -> {n} ({}: -{})", s.stage, s.removed.len()));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub alpha: f64,
    pub cindex_tol: f64,
    /// Defaults to `max(1, remaining / 8)`.
    pub initial_batch: Option<usize>,
    pub exclusions: Vec<String>,
    pub cox: CoxOptions,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            cindex_tol: DEFAULT_CINDEX_TOL,
            initial_batch: None,
            exclusions: Vec::new(),
            cox: CoxOptions::default(),
        }
    }
}

/// Train and validation designs over the same columns.
#[derive(Debug, Clone, Copy)]
pub struct SelectionData<'a> {
    pub train: &'a DesignMatrix,
    pub train_y: &'a OutcomeColumn,
    pub val: &'a DesignMatrix,
    pub val_y: &'a OutcomeColumn,
}

impl SelectionData<'_> {
    fn check(&self) -> Result<(), SelectionError> {
        if self.train.column_names != self.val.column_names {
            return Err(SelectionError::ColumnMismatch);
        }
        Ok(())
    }

    fn indices(&self, names: &[String]) -> Result<Vec<usize>, SelectionError> {
        names
            .iter()
            .map(|n| self.train.column_index(n).ok_or_else(|| SelectionError::UnknownFeature(n.clone())))
            .collect()
    }

    fn fit(&self, names: &[String], options: CoxOptions) -> Result<CoxFit, CoxError> {
        let idx = self.indices(names).map_err(|e| CoxError::Dimension(e.to_string()))?;
        let x = self.train.values.select(Axis(1), &idx);
        fit_cox_values(x.view(), names, self.train_y, options)
    }

    fn val_cindex(&self, fit: &CoxFit) -> Option<f64> {
        let idx = self.indices(&fit.column_names).ok()?;
        let x = self.val.values.select(Axis(1), &idx);
        let eta = fit.linear_predictors(x.view());
        concordance_index(&eta, &self.val_y.duration, &self.val_y.event).ok()
    }

    fn fit_and_score(&self, names: &[String], options: CoxOptions) -> Option<f64> {
        self.fit(names, options).ok().and_then(|f| self.val_cindex(&f))
    }
}

fn univariate_p(x: ArrayView2<f64>, name: &str, outcome: &OutcomeColumn, options: CoxOptions) -> Result<f64, CoxError> {
    let fit = fit_cox_values(x, &[name.to_string()], outcome, options)?;
    let z = fit.z_scores()[0];
    if !z.is_finite() || fit.standard_errors()[0] == 0.0 {
        return Err(CoxError::Singular { column: name.into() });
    }
    Ok(two_sided_normal_p(z))
}

/// Only p-values strictly above `alpha` are filtered out.
pub fn passes_filter(p: f64, alpha: f64) -> bool {
    p <= alpha
}

/// One-feature Cox fit per column; keeps columns with Wald p <= `alpha`.
/// A column whose fit fails is dropped as degenerate.
pub fn univariate_filter(
    design: &DesignMatrix,
    outcome: &OutcomeColumn,
    alpha: f64,
    options: CoxOptions,
) -> (Vec<String>, StageRecord) {
    let results: Vec<(String, Result<f64, CoxError>)> = (0..design.n_cols())
        .into_par_iter()
        .map(|j| {
            let name = &design.column_names[j];
            let col = design.values.slice(ndarray::s![.., j..j + 1]);
            (name.clone(), univariate_p(col, name, outcome, options))
        })
        .collect();
    let mut stage = StageRecord::new("univariate", design.n_cols());
    let mut kept = Vec::new();
    for (name, r) in results {
        match r {
            Ok(p) => {
                stage.p_values.insert(name.clone(), p);
                if passes_filter(p, alpha) {
                    kept.push(name);
                } else {
                    stage.removed.push(name);
                }
            }
            Err(e) => {
                log::debug!("univariate fit of {name} failed: {e}");
                stage.reasons.insert(name.clone(), "degenerate".into());
                stage.removed.push(name);
            }
        }
    }
    (kept, stage)
}

/// Repeatedly removes the weakest features by Wald |z|, a batch at a time,
/// as long as the validation c-index drops by less than `tol`. A rejected
/// batch is halved; elimination ends when a single-feature removal is
/// rejected.
pub fn backward_eliminate(
    data: &SelectionData<'_>,
    features: &[String],
    tol: f64,
    initial_batch: Option<usize>,
    options: CoxOptions,
) -> Result<(Vec<String>, StageRecord), SelectionError> {
    data.check()?;
    if features.len() < 2 {
        return Err(SelectionError::TooFewFeatures(features.len()));
    }
    let mut stage = StageRecord::new("backward", features.len());
    let mut current = features.to_vec();
    let mut fit = data.fit(&current, options)?;
    let mut score = data.val_cindex(&fit).ok_or(SelectionError::UndefinedCIndex)?;
    stage.c_index_before = Some(score);
    let schedule = |n: usize| initial_batch.unwrap_or((n / 8).max(1)).max(1);
    let mut batch = schedule(current.len());

    while current.len() > 1 {
        let z = fit.z_scores();
        let mut order: Vec<usize> = (0..current.len()).collect();
        order.sort_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs()).then(a.cmp(&b)));
        let size = batch.min(current.len() - 1);
        let candidates: Vec<String> = order[..size].iter().map(|&i| current[i].clone()).collect();
        let remaining: Vec<String> = current.iter().filter(|f| !candidates.contains(f)).cloned().collect();
        let refit = data.fit(&remaining, options).ok();
        let after = refit.as_ref().and_then(|f| data.val_cindex(f));
        let committed = after.is_some_and(|a| score - a < tol);
        log::debug!(
            "backward: remove {size} of {} -> c-index {score:.5} to {after:?} ({})",
            current.len(),
            if committed { "commit" } else { "reject" }
        );
        stage.steps.push(EliminationStep {
            batch_size: size,
            candidates: candidates.clone(),
            c_index_before: score,
            c_index_after: after,
            committed,
        });
        if committed {
            stage.removed.extend(candidates);
            current = remaining;
            fit = refit.expect("committed refit");
            score = after.expect("committed score");
            batch = batch.min(schedule(current.len()));
        } else if size == 1 {
            break;
        } else {
            batch = size / 2;
        }
    }
    stage.c_index_after = Some(score);
    Ok((current, stage))
}

/// Removes the listed names; names not in the set are reported as warnings.
pub fn apply_exclusion_list(features: &[String], exclusions: &[String]) -> (Vec<String>, StageRecord) {
    let mut stage = StageRecord::new("exclusion", features.len());
    for name in exclusions {
        if !features.contains(name) {
            let msg = format!("excluded feature '{name}' is not in the current set");
            log::warn!("{msg}");
            stage.warnings.push(msg);
        }
    }
    let kept = features
        .iter()
        .filter(|f| {
            let drop = exclusions.contains(f);
            if drop {
                stage.removed.push((*f).clone());
            }
            !drop
        })
        .cloned()
        .collect();
    (kept, stage)
}

/// Univariate filter on the training split, backward elimination against
/// the validation split, then the exclusion list.
pub fn run_selection(data: &SelectionData<'_>, options: &SelectionOptions) -> Result<SelectionTrace, SelectionError> {
    data.check()?;
    let initial = data.train.column_names.clone();
    let (kept, mut uni) = univariate_filter(data.train, data.train_y, options.alpha, options.cox);
    uni.c_index_before = data.fit_and_score(&initial, options.cox);
    uni.c_index_after = data.fit_and_score(&kept, options.cox);
    let mut stages = vec![uni];
    let mut current = kept;
    if current.len() >= 2 {
        let (next, stage) = backward_eliminate(data, &current, options.cindex_tol, options.initial_batch, options.cox)?;
        current = next;
        stages.push(stage);
    } else {
        log::warn!("{} features survive the univariate filter; skipping backward elimination", current.len());
    }
    let before = data.fit_and_score(&current, options.cox);
    let (kept, mut excl) = apply_exclusion_list(&current, &options.exclusions);
    excl.c_index_before = before;
    excl.c_index_after = if excl.removed.is_empty() {
        before
    } else {
        data.fit_and_score(&kept, options.cox)
    };
    stages.push(excl);
    Ok(SelectionTrace {
        initial_features: initial,
        stages,
        final_features: kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn alpha_boundary_is_kept() {
        assert!(passes_filter(0.01, 0.01));
        assert!(!passes_filter(0.010_000_1, 0.01));
    }

    #[test]
    fn exclusion_list_contract() {
        let f = names(&["a", "b", "c"]);
        let (same, s) = apply_exclusion_list(&f, &[]);
        assert_eq!(same, f);
        assert!(s.removed.is_empty() && s.warnings.is_empty());
        let (kept, s) = apply_exclusion_list(&f, &names(&["b", "zz"]));
        assert_eq!(kept, names(&["a", "c"]));
        assert_eq!(s.removed, names(&["b"]));
        assert_eq!(s.warnings.len(), 1);
        let (kept, s) = apply_exclusion_list(&f, &names(&["zz"]));
        assert_eq!(kept, f);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn summary_format() {
        let trace = SelectionTrace {
            initial_features: names(&["a", "b", "c", "d"]),
            stages: vec![
                StageRecord {
                    removed: names(&["a"]),
                    ..StageRecord::new("univariate", 4)
                },
                StageRecord {
                    removed: names(&["b", "c"]),
                    ..StageRecord::new("backward", 3)
                },
            ],
            final_features: names(&["d"]),
        };
        assert_eq!(trace.summary(), "4 -> 3 (univariate: -1) -> 1 (backward: -2)");
    }
}
