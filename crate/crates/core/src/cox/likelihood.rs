use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::CoxError;
use crate::cohort::OutcomeColumn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMethod {
    #[default]
    Efron,
    Breslow,
}

/// Log partial likelihood with its exact first and second derivatives.
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    pub value: f64,
    pub gradient: Array1<f64>,
    pub hessian: Array2<f64>,
}

/// Subjects grouped by identical follow-up time, latest time first.
#[derive(Debug, Clone)]
pub(crate) struct TimeGroups {
    /// Subject indices sorted by decreasing duration.
    pub order: Vec<usize>,
    /// `(start, end)` ranges into `order`, one per distinct time.
    pub groups: Vec<(usize, usize)>,
}

impl TimeGroups {
    pub fn new(outcome: &OutcomeColumn) -> Self {
        let mut order: Vec<usize> = (0..outcome.len()).collect();
        order.sort_by(|&a, &b| outcome.duration[b].total_cmp(&outcome.duration[a]));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = outcome.duration[order[start]];
            let mut end = start + 1;
            while end < order.len() && outcome.duration[order[end]] == t {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }
        Self { order, groups }
    }
}

pub(crate) fn check_inputs(x: &ArrayView2<f64>, outcome: &OutcomeColumn) -> Result<(), CoxError> {
    if x.nrows() != outcome.len() {
        return Err(CoxError::Dimension(format!(
            "design has {} rows but outcome has {}",
            x.nrows(),
            outcome.len()
        )));
    }
    if outcome.n_events() == 0 {
        return Err(CoxError::NoEvents);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoxError::Dimension("design contains non-finite values".into()));
    }
    Ok(())
}

/// Cox log partial likelihood at `beta`.
pub fn partial_loglik(
    beta: &Array1<f64>,
    x: ArrayView2<f64>,
    outcome: &OutcomeColumn,
    ties: TieMethod,
) -> Result<PartialLikelihood, CoxError> {
    check_inputs(&x, outcome)?;
    if beta.len() != x.ncols() {
        return Err(CoxError::Dimension(format!(
            "beta has {} entries but design has {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    let groups = TimeGroups::new(outcome);
    Ok(evaluate(beta, &x, outcome, &groups, ties))
}

pub(crate) fn evaluate(
    beta: &Array1<f64>,
    x: &ArrayView2<f64>,
    outcome: &OutcomeColumn,
    groups: &TimeGroups,
    ties: TieMethod,
) -> PartialLikelihood {
    let p = x.ncols();
    let eta = x.dot(beta);
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut value = 0.0;
    let mut gradient = Array1::<f64>::zeros(p);
    let mut hessian = Array2::<f64>::zeros((p, p));

    // risk-set sums over subjects with duration >= current time
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];
    // tied-event sums for the current time
    let mut t1 = vec![0.0; p];
    let mut t2 = vec![0.0; p * p];
    let mut a1 = vec![0.0; p];

    for &(start, end) in &groups.groups {
        let mut t0 = 0.0;
        let mut deaths = 0usize;
        t1.iter_mut().for_each(|v| *v = 0.0);
        t2.iter_mut().for_each(|v| *v = 0.0);
        for &i in &groups.order[start..end] {
            let w = (eta[i] - shift).exp();
            let row = x.row(i);
            s0 += w;
            for a in 0..p {
                let wa = w * row[a];
                s1[a] += wa;
                for b in 0..=a {
                    s2[a * p + b] += wa * row[b];
                }
            }
            if outcome.event[i] {
                deaths += 1;
                t0 += w;
                value += eta[i];
                for a in 0..p {
                    let wa = w * row[a];
                    gradient[a] += row[a];
                    t1[a] += wa;
                    for b in 0..=a {
                        t2[a * p + b] += wa * row[b];
                    }
                }
            }
        }
        if deaths == 0 {
            continue;
        }
        let d = deaths as f64;
        for l in 0..deaths {
            let frac = match ties {
                TieMethod::Efron => l as f64 / d,
                TieMethod::Breslow => 0.0,
            };
            let a0 = s0 - frac * t0;
            value -= a0.ln() + shift;
            for a in 0..p {
                a1[a] = (s1[a] - frac * t1[a]) / a0;
                gradient[a] -= a1[a];
            }
            for a in 0..p {
                for b in 0..=a {
                    let a2 = (s2[a * p + b] - frac * t2[a * p + b]) / a0;
                    hessian[[a, b]] -= a2 - a1[a] * a1[b];
                }
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            hessian[[b, a]] = hessian[[a, b]];
        }
    }
    PartialLikelihood {
        value,
        gradient,
        hessian,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_subjects_at_zero_is_minus_ln_two() {
        let x = array![[0.3], [-1.2]];
        let o = OutcomeColumn::new(vec![1.0, 2.0], vec![true, true]).unwrap();
        let ll = partial_loglik(&array![0.0], x.view(), &o, TieMethod::Efron).unwrap();
        assert!((ll.value + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn single_event_among_n_is_minus_ln_n() {
        let n = 7;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let mut event = vec![false; n];
        event[0] = true;
        let o = OutcomeColumn::new(vec![1.0; n].iter().enumerate().map(|(i, _)| 1.0 + i as f64).collect(), event).unwrap();
        let ll = partial_loglik(&array![0.0, 0.0], x.view(), &o, TieMethod::Efron).unwrap();
        assert!((ll.value + (n as f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn no_events_is_an_error() {
        let x = array![[1.0], [2.0]];
        let o = OutcomeColumn::new(vec![1.0, 2.0], vec![false, false]).unwrap();
        assert!(matches!(
            partial_loglik(&array![0.0], x.view(), &o, TieMethod::Efron),
            Err(CoxError::NoEvents)
        ));
    }

    #[test]
    fn efron_tied_pair_by_hand() {
        // two tied events, one later censored subject, beta = 0:
        // Efron: -ln(3) - ln(3 - 1/2 * 2) = -ln 3 - ln 2
        // Breslow: -2 ln 3
        let x = array![[1.0], [0.0], [2.0]];
        let o = OutcomeColumn::new(vec![1.0, 1.0, 5.0], vec![true, true, false]).unwrap();
        let efron = partial_loglik(&array![0.0], x.view(), &o, TieMethod::Efron).unwrap();
        let breslow = partial_loglik(&array![0.0], x.view(), &o, TieMethod::Breslow).unwrap();
        assert!((efron.value + 3f64.ln() + 2f64.ln()).abs() < 1e-14);
        assert!((breslow.value + 2.0 * 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn no_ties_efron_equals_breslow() {
        let x = array![[0.5, 1.0], [-0.2, 0.3], [1.1, -0.7], [0.0, 0.4]];
        let o = OutcomeColumn::new(vec![1.0, 2.0, 3.0, 4.0], vec![true, false, true, true]).unwrap();
        let b = array![0.3, -0.8];
        let e = partial_loglik(&b, x.view(), &o, TieMethod::Efron).unwrap();
        let r = partial_loglik(&b, x.view(), &o, TieMethod::Breslow).unwrap();
        assert_eq!(e.value, r.value);
        assert_eq!(e.gradient, r.gradient);
    }
}
