use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{kaplan_meier, MetricsError};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_SPAN: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin: usize,
    pub mean_predicted: f64,
    /// `1 - S(horizon)` from a within-bin Kaplan-Meier; `None` when the bin
    /// has no events and nobody followed to the horizon.
    pub observed: Option<f64>,
    pub count: usize,
    pub events: usize,
}

/// Equal-count quantile bins of predicted risk. Subjects with identical
/// predictions always share a bin, so heavy ties merge bins.
pub fn calibration_curve(
    predicted: &[f64],
    durations: &[f64],
    events: &[bool],
    horizon: f64,
    bins: usize,
) -> Result<Vec<CalibrationBin>, MetricsError> {
    let n = predicted.len();
    if durations.len() != n || events.len() != n {
        return Err(MetricsError::Length);
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if bins == 0 {
        return Err(MetricsError::Invalid("bins must be at least 1".into()));
    }
    if predicted.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(MetricsError::Invalid("predicted probabilities must lie in [0, 1]".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]));
    let mut assignment = vec![0usize; n];
    let mut first_rank = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && predicted[i] != predicted[order[pos - 1]] {
            first_rank = pos;
        }
        assignment[i] = first_rank * bins / n;
    }
    let mut out = Vec::new();
    for b in 0..bins {
        let members: Vec<usize> = order.iter().copied().filter(|&i| assignment[i] == b).collect();
        if members.is_empty() {
            continue;
        }
        let d: Vec<f64> = members.iter().map(|&i| durations[i]).collect();
        let e: Vec<bool> = members.iter().map(|&i| events[i]).collect();
        let n_events = e.iter().filter(|&&x| x).count();
        let followed = d.iter().any(|&t| t >= horizon);
        let observed = if n_events == 0 && !followed {
            None
        } else {
            Some(kaplan_meier(&d, &e)?.risk_at(horizon))
        };
        out.push(CalibrationBin {
            bin: b,
            mean_predicted: members.iter().map(|&i| predicted[i]).sum::<f64>() / members.len() as f64,
            observed,
            count: members.len(),
            events: n_events,
        });
    }
    Ok(out)
}

/// Count-weighted mean absolute gap between observed and predicted over
/// the estimable bins.
pub fn integrated_calibration_index(bins: &[CalibrationBin]) -> Result<f64, MetricsError> {
    let (num, den) = bins.iter().fold((0.0, 0usize), |(num, den), b| match b.observed {
        Some(o) => (num + b.count as f64 * (o - b.mean_predicted).abs(), den + b.count),
        None => (num, den),
    });
    if den == 0 {
        return Err(MetricsError::Invalid("no estimable calibration bin".into()));
    }
    Ok(num / den as f64)
}

/// `bin,mean_predicted,observed,count`; observed left empty when not
/// estimable.
pub fn calibration_csv(bins: &[CalibrationBin]) -> String {
    let mut out = String::from("bin,mean_predicted,observed,count\n");
    for b in bins {
        let observed = b.observed.map(|o| o.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", b.bin, b.mean_predicted, observed, b.count);
    }
    out
}

/// Local-linear smoother with tricube weights over the estimable bins,
/// weighted by bin count. Presentation only.
pub fn smooth_calibration(bins: &[CalibrationBin], span: f64) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64, f64)> = bins
        .iter()
        .filter_map(|b| b.observed.map(|o| (b.mean_predicted, o, b.count as f64)))
        .collect();
    if pts.len() < 2 {
        return pts.iter().map(|&(x, y, _)| (x, y)).collect();
    }
    let k = ((span * pts.len() as f64).ceil() as usize).clamp(2, pts.len());
    pts.iter()
        .map(|&(x0, _, _)| {
            let mut dist: Vec<f64> = pts.iter().map(|p| (p.0 - x0).abs()).collect();
            dist.sort_by(f64::total_cmp);
            let h = dist[k - 1].max(f64::EPSILON);
            let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &(x, y, c) in &pts {
                let u = ((x - x0).abs() / h).min(1.0);
                let w = c * (1.0 - u.powi(3)).powi(3);
                sw += w;
                sx += w * x;
                sy += w * y;
                sxx += w * x * x;
                sxy += w * x * y;
            }
            let denom = sw * sxx - sx * sx;
            let y0 = if sw == 0.0 {
                f64::NAN
            } else if denom.abs() < 1e-14 * sw * sw {
                sy / sw
            } else {
                let slope = (sw * sxy - sx * sy) / denom;
                (sy - slope * sx) / sw + slope * x0
            };
            (x0, y0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(pred: f64, obs: Option<f64>, count: usize) -> CalibrationBin {
        CalibrationBin {
            bin: 0,
            mean_predicted: pred,
            observed: obs,
            count,
            events: 0,
        }
    }

    #[test]
    fn ici_single_bin_identity() {
        assert!((integrated_calibration_index(&[bin(0.1, Some(0.15), 7)]).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn ici_perfect_is_zero() {
        let bins = [bin(0.1, Some(0.1), 5), bin(0.3, Some(0.3), 9)];
        assert_eq!(integrated_calibration_index(&bins).unwrap(), 0.0);
    }

    #[test]
    fn identical_predictions_share_one_bin() {
        let p = vec![0.2; 40];
        let d: Vec<f64> = (1..=40).map(|i| i as f64 * 0.5).collect();
        let e: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let bins = calibration_curve(&p, &d, &e, 10.0, 10).unwrap();
        assert_eq!(bins.len(), 1);
        let km = kaplan_meier(&d, &e).unwrap();
        assert_eq!(bins[0].observed, Some(km.risk_at(10.0)));
    }

    #[test]
    fn short_censored_bin_is_not_estimable() {
        let p = [0.1, 0.1, 0.9, 0.9];
        let d = [1.0, 2.0, 11.0, 12.0];
        let e = [false, false, true, false];
        let bins = calibration_curve(&p, &d, &e, 10.0, 2).unwrap();
        assert_eq!(bins[0].observed, None);
        assert!(bins[1].observed.is_some());
    }

    #[test]
    fn smoother_reproduces_a_line() {
        let bins: Vec<CalibrationBin> = (0..8).map(|i| bin(i as f64 * 0.1, Some(i as f64 * 0.2), 10)).collect();
        for (x, y) in smooth_calibration(&bins, DEFAULT_SPAN) {
            assert!((y - 2.0 * x).abs() < 1e-12);
        }
    }
}
