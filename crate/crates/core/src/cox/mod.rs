//! Cox proportional-hazards regression.
//!
//! Newton-Raphson on the partial likelihood (Efron ties by default), Wald
//! inference, and the Breslow estimator of the baseline cumulative hazard
//! used to turn linear predictors into absolute risks.

mod fit;
mod likelihood;
mod summary;

use ndarray::{Array1, ArrayView2};
use thiserror::Error;

pub use fit::{fit_cox, fit_cox_values, Convergence, CoxFit, CoxOptions, JITTER_LEVELS};
pub use likelihood::{partial_loglik, PartialLikelihood, TieMethod};
pub use summary::{format_row, summarize, CoxSummary, CoxSummaryRow, Z_95};

pub(crate) use likelihood::TimeGroups;

use crate::cohort::OutcomeColumn;
use crate::step::StepFunction;

#[derive(Debug, Error)]
pub enum CoxError {
    #[error("no events")]
    NoEvents,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("separation/singularity at column '{column}' after ridge escalation")]
    Singular { column: String },
    #[error("Newton iterations did not converge after {iterations} steps (gradient max-norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        beta: Vec<f64>,
    },
}

/// Breslow estimate of the baseline cumulative hazard (covariates at zero):
/// at each distinct event time, events divided by the summed relative risk
/// of everyone still at risk.
pub fn baseline_cumhaz(beta: &[f64], x: ArrayView2<f64>, outcome: &OutcomeColumn) -> Result<StepFunction, CoxError> {
    if x.nrows() != outcome.len() || x.ncols() != beta.len() {
        return Err(CoxError::Dimension("baseline inputs disagree in shape".into()));
    }
    let eta = x.dot(&Array1::from(beta.to_vec()));
    Ok(breslow_from_eta(eta.as_slice().unwrap_or(&eta.to_vec()), outcome))
}

/// Breslow estimator given precomputed linear predictors (or network
/// outputs).
pub fn breslow_from_eta(eta: &[f64], outcome: &OutcomeColumn) -> StepFunction {
    let groups = TimeGroups::new(outcome);
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_time = outcome.duration.iter().copied().fold(0.0, f64::max);
    let mut risk = 0.0;
    // walk from the latest time backwards, then reverse
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    for &(start, end) in &groups.groups {
        let mut deaths = 0usize;
        for &i in &groups.order[start..end] {
            risk += (eta[i] - shift).exp();
            if outcome.event[i] {
                deaths += 1;
            }
        }
        if deaths > 0 {
            let t = outcome.duration[groups.order[start]];
            jumps.push((t, deaths as f64 / risk * (-shift).exp()));
        }
    }
    jumps.reverse();
    let mut total = 0.0;
    let mut times = Vec::with_capacity(jumps.len());
    let mut values = Vec::with_capacity(jumps.len());
    for (t, h) in jumps {
        total += h;
        times.push(t);
        values.push(total);
    }
    StepFunction {
        times,
        values,
        max_time,
    }
}

/// Absolute risk by `horizon` for a linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskPrediction {
    pub risk: f64,
    pub extrapolated: bool,
}

/// `1 - exp(-H0(horizon) * exp(eta))`.
pub fn risk_from_eta(baseline: &StepFunction, eta: f64, horizon: f64) -> RiskPrediction {
    let h0 = baseline.eval_flagged(horizon);
    let cumulative = h0.value * eta.exp();
    let risk = if cumulative.is_finite() {
        (-(-cumulative).exp_m1()).clamp(0.0, 1.0)
    } else {
        1.0
    };
    RiskPrediction {
        risk,
        extrapolated: h0.extrapolated,
    }
}

pub fn predict_risk(fit: &CoxFit, x: &[f64], horizon: f64) -> Result<RiskPrediction, CoxError> {
    if x.len() != fit.beta.len() {
        return Err(CoxError::Dimension(format!(
            "expected {} covariates, got {}",
            fit.beta.len(),
            x.len()
        )));
    }
    Ok(risk_from_eta(&fit.baseline_cumhaz, fit.linear_predictor(x), horizon))
}

/// Risks for every row of a design.
pub fn predict_risks(fit: &CoxFit, x: ArrayView2<f64>, horizon: f64) -> Vec<f64> {
    fit.linear_predictors(x)
        .into_iter()
        .map(|eta| risk_from_eta(&fit.baseline_cumhaz, eta, horizon).risk)
        .collect()
}

pub const DEFAULT_HORIZON_YEARS: f64 = 10.0;
