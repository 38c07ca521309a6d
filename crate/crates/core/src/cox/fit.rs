use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::likelihood::{check_inputs, evaluate, PartialLikelihood, TieMethod, TimeGroups};
use super::{baseline_cumhaz, CoxError};
use crate::cohort::{DesignMatrix, OutcomeColumn};
use crate::linalg::{Cholesky, FactorError};
use crate::step::StepFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub tol: f64,
    /// L2 penalty `ridge / 2 * |beta|^2` subtracted from the log likelihood.
    pub ridge: f64,
    pub ties: TieMethod,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-7,
            ridge: 0.0,
            ties: TieMethod::Efron,
        }
    }
}

/// Jitter levels tried, relative to each diagonal entry, when the observed
/// information is singular.
pub const JITTER_LEVELS: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Diagonal entries below this fraction of the largest are treated as
/// carrying no information at all.
const ZERO_INFORMATION: f64 = 1e-12;

/// Relative tolerance on the log likelihood when accepting a step.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
    /// Largest relative jitter needed to factor the information matrix.
    pub jitter: f64,
    pub step_halvings: usize,
    /// Penalized log likelihood after each accepted step, starting at beta = 0.
    pub history: Vec<f64>,
}

/// A fitted Cox model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    /// Inverse of the negative Hessian at the optimum.
    pub covariance: Array2<f64>,
    pub baseline_cumhaz: StepFunction,
    pub column_names: Vec<String>,
    pub convergence: Convergence,
    pub options: CoxOptions,
}

impl CoxFit {
    pub fn n_coefficients(&self) -> usize {
        self.beta.len()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta.len())
            .map(|j| self.covariance[[j, j]].max(0.0).sqrt())
            .collect()
    }

    /// Wald z statistic per coefficient.
    pub fn z_scores(&self) -> Vec<f64> {
        self.beta
            .iter()
            .zip(self.standard_errors())
            .map(|(b, se)| if se > 0.0 { b / se } else { 0.0 })
            .collect()
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }

    pub fn linear_predictors(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.dot(&Array1::from(self.beta.clone())).to_vec()
    }
}

fn penalized(mut ll: PartialLikelihood, beta: &Array1<f64>, ridge: f64) -> PartialLikelihood {
    if ridge > 0.0 {
        ll.value -= 0.5 * ridge * beta.dot(beta);
        ll.gradient.scaled_add(-ridge, beta);
        for j in 0..beta.len() {
            ll.hessian[[j, j]] -= ridge;
        }
    }
    ll
}

/// Factors `info`, escalating a diagonal jitter on failure. Returns the
/// factor and the jitter used.
pub(crate) fn factor_information(
    info: &Array2<f64>,
    names: &[String],
) -> Result<(Cholesky, f64), CoxError> {
    let p = info.nrows();
    let max_diag = (0..p).map(|j| info[[j, j]]).fold(0.0, f64::max);
    let dead: Vec<usize> = (0..p)
        .filter(|&j| !(info[[j, j]] > ZERO_INFORMATION * max_diag))
        .collect();
    let column = |j: usize| names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
    if dead.is_empty() {
        match Cholesky::factor(info) {
            Ok(chol) => return Ok((chol, 0.0)),
            Err(FactorError::NotSquare) => {
                return Err(CoxError::Dimension("information matrix is not square".into()))
            }
            Err(FactorError::Singular { .. }) => {}
        }
    }
    let mut last = dead.first().copied().unwrap_or(0);
    for &level in &JITTER_LEVELS {
        if !dead.is_empty() {
            log::debug!("jitter {level:e} cannot rescue zero-information column {}", column(dead[0]));
            continue;
        }
        let mut jittered = info.clone();
        for j in 0..p {
            jittered[[j, j]] += level * info[[j, j]];
        }
        match Cholesky::factor(&jittered) {
            Ok(chol) => {
                log::debug!("information matrix singular; factored with relative jitter {level:e}");
                return Ok((chol, level));
            }
            Err(FactorError::Singular { index }) => last = index,
            Err(FactorError::NotSquare) => unreachable!(),
        }
    }
    Err(CoxError::Singular { column: column(last) })
}

/// Fits by Newton-Raphson with step-halving, starting from zero.
pub fn fit_cox(design: &DesignMatrix, outcome: &OutcomeColumn, options: CoxOptions) -> Result<CoxFit, CoxError> {
    fit_cox_values(design.values.view(), &design.column_names, outcome, options)
}

pub fn fit_cox_values(
    x: ArrayView2<f64>,
    column_names: &[String],
    outcome: &OutcomeColumn,
    options: CoxOptions,
) -> Result<CoxFit, CoxError> {
    check_inputs(&x, outcome)?;
    let p = x.ncols();
    if column_names.len() != p {
        return Err(CoxError::Dimension("column names do not match design width".into()));
    }
    if p == 0 {
        return Err(CoxError::Dimension("design has no columns".into()));
    }
    let groups = TimeGroups::new(outcome);
    let objective = |b: &Array1<f64>| penalized(evaluate(b, &x, outcome, &groups, options.ties), b, options.ridge);

    let mut beta = Array1::<f64>::zeros(p);
    let mut current = objective(&beta);
    let mut jitter: f64 = 0.0;
    let mut halvings_total = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut history = vec![current.value];

    while iterations < options.max_iter {
        let gnorm = max_abs(&current.gradient);
        if gnorm < options.tol {
            converged = true;
            break;
        }
        let info = -&current.hessian;
        let (chol, used) = factor_information(&info, column_names)?;
        jitter = jitter.max(used);
        let step = chol.solve(&current.gradient);
        let decrement = step.dot(&current.gradient);
        iterations += 1;

        // near the optimum the predicted gain is below the rounding error
        // of the summed log likelihood; do not let that noise reject steps
        let slack = ROUNDING_SLACK * current.value.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = &beta + &(scale * &step);
            let next = objective(&candidate);
            if next.value.is_finite() && next.value >= current.value - slack {
                accepted = Some((candidate, next));
                break;
            }
            scale *= 0.5;
            halvings_total += 1;
        }
        match accepted {
            Some((b, next)) => {
                beta = b;
                current = next;
                history.push(current.value);
            }
            None => {
                // No ascent possible: the predicted gain is below rounding.
                if decrement.abs() < 1e-10 {
                    converged = true;
                    break;
                }
                return Err(CoxError::NotConverged {
                    iterations,
                    gradient_norm: gnorm,
                    beta: beta.to_vec(),
                });
            }
        }
    }
    if !converged {
        let gnorm = max_abs(&current.gradient);
        if gnorm < options.tol {
            converged = true;
        } else {
            return Err(CoxError::NotConverged {
                iterations,
                gradient_norm: gnorm,
                beta: beta.to_vec(),
            });
        }
    }
    debug_assert!(converged);

    let info = -&current.hessian;
    let (chol, used) = factor_information(&info, column_names)?;
    jitter = jitter.max(used);
    let covariance = chol.inverse();
    let beta_vec = beta.to_vec();
    let baseline = baseline_cumhaz(&beta_vec, x, outcome)?;
    Ok(CoxFit {
        beta: beta_vec,
        covariance,
        baseline_cumhaz: baseline,
        column_names: column_names.to_vec(),
        convergence: Convergence {
            iterations,
            gradient_norm: max_abs(&current.gradient),
            log_likelihood: current.value,
            jitter,
            step_halvings: halvings_total,
            history,
        },
        options,
    })
}

fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
