use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Kaplan-Meier survival curve. `survival[k]` holds on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Largest observed time, event or censored.
    pub max_time: f64,
}

impl KmCurve {
    /// Right-continuous evaluation; 1 before the first event time.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    pub fn risk_at(&self, t: f64) -> f64 {
        1.0 - self.survival_at(t)
    }
}

/// Product-limit estimate. Censored subjects stay in the risk set at
/// their own time and leave after it.
pub fn kaplan_meier(durations: &[f64], events: &[bool]) -> Result<KmCurve, MetricsError> {
    if durations.len() != events.len() {
        return Err(MetricsError::Length);
    }
    if durations.is_empty() {
        return Err(MetricsError::Empty);
    }
    if durations.iter().any(|d| !d.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));
    let mut remaining = durations.len();
    let mut s = 1.0;
    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        max_time: durations[order[order.len() - 1]],
    };
    let mut start = 0;
    while start < order.len() {
        let t = durations[order[start]];
        let mut end = start + 1;
        while end < order.len() && durations[order[end]] == t {
            end += 1;
        }
        let d = order[start..end].iter().filter(|&&i| events[i]).count();
        if d > 0 {
            s *= 1.0 - d as f64 / remaining as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(remaining);
            curve.events.push(d);
        }
        remaining -= end - start;
        start = end;
    }
    Ok(curve)
}
