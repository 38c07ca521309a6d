use crate::cohort::OutcomeColumn;

/// Efron negative log partial likelihood of `eta`, divided by the number
/// of events, and its gradient with respect to `eta`. `None` without events.
///
/// d(loglik)/d(eta_k) = delta_k - e_k * C(t_k) + delta_k * e_k * sum_l (l/d) / A_l,
/// where C(t) accumulates 1/A over every tied-event slot at times <= t.
pub fn cox_loss_and_grad(eta: &[f64], outcome: &OutcomeColumn) -> Option<(f64, Vec<f64>)> {
    let n = eta.len();
    assert_eq!(n, outcome.len(), "eta and outcome lengths differ");
    let n_events = outcome.n_events();
    if n_events == 0 {
        return None;
    }
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| outcome.duration[b].total_cmp(&outcome.duration[a]));

    // per distinct time, from latest to earliest: (range, sum 1/A, sum (l/d)/A)
    let mut groups: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut loglik = 0.0;
    let mut s0 = 0.0;
    let mut start = 0;
    while start < n {
        let t = outcome.duration[order[start]];
        let mut end = start + 1;
        while end < n && outcome.duration[order[end]] == t {
            end += 1;
        }
        let mut t0 = 0.0;
        let mut d = 0usize;
        for &i in &order[start..end] {
            s0 += w[i];
            if outcome.event[i] {
                t0 += w[i];
                d += 1;
                loglik += eta[i];
            }
        }
        let (mut inv, mut frac_inv) = (0.0, 0.0);
        for l in 0..d {
            let frac = l as f64 / d as f64;
            let a = s0 - frac * t0;
            loglik -= a.ln() + shift;
            inv += 1.0 / a;
            frac_inv += frac / a;
        }
        groups.push((start, end, inv, frac_inv));
        start = end;
    }
    let mut grad = vec![0.0; n];
    let mut cumulative = 0.0;
    for &(start, end, inv, frac_inv) in groups.iter().rev() {
        cumulative += inv;
        for &i in &order[start..end] {
            let mut g = -w[i] * cumulative;
            if outcome.event[i] {
                g += 1.0 + w[i] * frac_inv;
            }
            grad[i] = g;
        }
    }
    let scale = n_events as f64;
    for g in &mut grad {
        *g = -*g / scale;
    }
    Some((-loglik / scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_subjects_equal_outputs() {
        let o = OutcomeColumn::new(vec![1.0, 2.0], vec![true, true]).unwrap();
        let (loss, _) = cox_loss_and_grad(&[0.4, 0.4], &o).unwrap();
        assert!((loss - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_with_ties() {
        let o = OutcomeColumn::new(vec![1.0, 1.0, 2.0, 2.0, 2.0, 3.0], vec![true, true, true, false, true, false]).unwrap();
        let eta = [0.3, -0.2, 1.1, 0.0, -0.7, 0.5];
        let (_, g) = cox_loss_and_grad(&eta, &o).unwrap();
        let h = 1e-6;
        for k in 0..eta.len() {
            let mut up = eta;
            let mut down = eta;
            up[k] += h;
            down[k] -= h;
            let fd = (cox_loss_and_grad(&up, &o).unwrap().0 - cox_loss_and_grad(&down, &o).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8, "k={k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn no_events_is_none() {
        let o = OutcomeColumn::new(vec![1.0, 2.0], vec![false, false]).unwrap();
        assert!(cox_loss_and_grad(&[0.0, 0.0], &o).is_none());
    }
}
