//! Censoring-aware evaluation: concordance, percentile bootstrap,
//! Kaplan-Meier, decile calibration, and the integrated calibration index.

mod bootstrap;
mod calibration;
mod concordance;
mod km;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{bootstrap_ci, resample_indices, BootstrapCi, DEFAULT_LEVEL, DEFAULT_ROUNDS};
pub use calibration::{
    calibration_csv, calibration_curve, integrated_calibration_index, smooth_calibration, CalibrationBin, DEFAULT_BINS,
    DEFAULT_SPAN,
};
pub use concordance::{concordance_counts, concordance_counts_brute_force, concordance_index, PairCounts};
pub use km::{kaplan_meier, KmCurve};

use crate::cohort::OutcomeColumn;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("input lengths differ")]
    Length,
    #[error("empty input")]
    Empty,
    #[error("non-finite input")]
    NonFinite,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("{failed} of {rounds} bootstrap rounds failed")]
    BootstrapFailed { failed: usize, rounds: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub horizon: f64,
    pub bins: usize,
    pub rounds: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            horizon: crate::cox::DEFAULT_HORIZON_YEARS,
            bins: DEFAULT_BINS,
            rounds: DEFAULT_ROUNDS,
            level: DEFAULT_LEVEL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub n_events: usize,
    pub c_index: f64,
    pub c_index_ci: (f64, f64),
    pub bootstrap_rounds: usize,
    pub bootstrap_failed_rounds: usize,
    pub horizon: f64,
    pub ici: f64,
    pub calibration_bins: Vec<CalibrationBin>,
    pub mean_predicted_risk: f64,
    /// Kaplan-Meier risk of the whole sample at the horizon.
    pub observed_risk: f64,
}

impl EvalReport {
    /// `0.7443 [0.7441 – 0.7445]`
    pub fn c_index_text(&self) -> String {
        format_estimate(self.c_index, self.c_index_ci.0, self.c_index_ci.1)
    }

    /// ICI in percent with three decimals, e.g. `0.295%`.
    pub fn ici_text(&self) -> String {
        format_percent(self.ici)
    }
}

pub fn format_estimate(point: f64, low: f64, high: f64) -> String {
    format!("{point:.4} [{low:.4} – {high:.4}]")
}

pub fn format_percent(fraction: f64) -> String {
    format!("{:.3}%", fraction * 100.0)
}

/// c-index with its bootstrap interval.
pub fn c_index_with_ci(
    scores: &[f64],
    outcome: &OutcomeColumn,
    rounds: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, BootstrapCi), MetricsError> {
    let point = concordance_index(scores, &outcome.duration, &outcome.event)?;
    let ci = bootstrap_ci(
        scores.len(),
        |rows| {
            let s: Vec<f64> = rows.iter().map(|&i| scores[i]).collect();
            let d: Vec<f64> = rows.iter().map(|&i| outcome.duration[i]).collect();
            let e: Vec<bool> = rows.iter().map(|&i| outcome.event[i]).collect();
            concordance_index(&s, &d, &e)
        },
        rounds,
        level,
        seed,
    )?;
    Ok((point, ci))
}

/// Full evaluation. `scores` rank subjects (a linear predictor or network
/// output); `risks` are the predicted probabilities at the horizon.
pub fn evaluate(
    scores: &[f64],
    risks: &[f64],
    outcome: &OutcomeColumn,
    options: &EvalOptions,
) -> Result<EvalReport, MetricsError> {
    if scores.len() != outcome.len() || risks.len() != outcome.len() {
        return Err(MetricsError::Length);
    }
    let (c, ci) = c_index_with_ci(scores, outcome, options.rounds, options.level, options.seed)?;
    let bins = calibration_curve(risks, &outcome.duration, &outcome.event, options.horizon, options.bins)?;
    let ici = integrated_calibration_index(&bins)?;
    let km = kaplan_meier(&outcome.duration, &outcome.event)?;
    Ok(EvalReport {
        n: outcome.len(),
        n_events: outcome.n_events(),
        c_index: c,
        c_index_ci: (ci.low, ci.high),
        bootstrap_rounds: ci.rounds,
        bootstrap_failed_rounds: ci.failed_rounds,
        horizon: options.horizon,
        ici,
        calibration_bins: bins,
        mean_predicted_risk: risks.iter().sum::<f64>() / risks.len() as f64,
        observed_risk: km.risk_at(options.horizon),
    })
}
