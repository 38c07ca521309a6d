use serde::{Deserialize, Serialize};

/// Right-continuous, nondecreasing step function starting at zero.
///
/// Used for baseline cumulative hazards. `max_time` is the last observed
/// follow-up time of the data the function was estimated from; evaluating
/// beyond it is extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StepDocument", try_from = "StepDocument")]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub max_time: f64,
}

/// Wire form: `{"max_time": .., "pairs": [[t, value], ..]}`.
#[derive(Serialize, Deserialize)]
struct StepDocument {
    max_time: f64,
    pairs: Vec<(f64, f64)>,
}

impl From<StepFunction> for StepDocument {
    fn from(f: StepFunction) -> Self {
        Self {
            max_time: f.max_time,
            pairs: f.pairs(),
        }
    }
}

impl TryFrom<StepDocument> for StepFunction {
    type Error = String;

    fn try_from(doc: StepDocument) -> Result<Self, Self::Error> {
        let (times, values) = doc.pairs.into_iter().unzip();
        let f = StepFunction {
            times,
            values,
            max_time: doc.max_time,
        };
        if !f.is_nondecreasing() || f.times.iter().chain(&f.values).any(|v| !v.is_finite()) {
            return Err("step function must have increasing times and nondecreasing finite values".into());
        }
        Ok(f)
    }
}

/// Value of a step function at a time, with an extrapolation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepValue {
    pub value: f64,
    pub extrapolated: bool,
}

impl StepFunction {
    pub fn zero(max_time: f64) -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
            max_time,
        }
    }

    /// Value at `t`, including any jump located exactly at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    pub fn eval_flagged(&self, t: f64) -> StepValue {
        StepValue {
            value: self.eval(t),
            extrapolated: t > self.max_time,
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.first().is_none_or(|&v| v >= 0.0)
            && self.values.windows(2).all(|w| w[1] >= w[0])
            && self.times.windows(2).all(|w| w[1] > w[0])
    }

    /// (t, value) pairs.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_continuous_lookup() {
        let f = StepFunction {
            times: vec![1.0, 2.0],
            values: vec![0.5, 1.5],
            max_time: 3.0,
        };
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(0.999), 0.0);
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.eval(2.0), 1.5);
        assert_eq!(f.eval(10.0), 1.5);
        assert!(!f.eval_flagged(3.0).extrapolated);
        assert!(f.eval_flagged(3.5).extrapolated);
        assert!(f.is_nondecreasing());
    }
}
