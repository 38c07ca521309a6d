use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::outcome::OutcomeColumn;
use super::CohortError;

/// Two disjoint, sorted index sets covering every subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

/// Splits subjects into `fraction` / `1 - fraction`, separately within the
/// event and non-event strata. Each stratum contributes
/// `round(fraction * size)` subjects to the first part, clamped so both
/// parts receive at least one.
pub fn stratified_split(outcome: &OutcomeColumn, fraction: f64, seed: u64) -> Result<Split, CohortError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CohortError::Split(format!("fraction {fraction} is outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (stratum, label) in [(true, "event"), (false, "non-event")] {
        let mut members: Vec<usize> = (0..outcome.len())
            .filter(|&i| outcome.event[i] == stratum)
            .collect();
        if members.len() < 2 {
            return Err(CohortError::Split(format!(
                "{label} stratum has {} subjects (need at least 2)",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let take = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        first.extend_from_slice(&members[..take]);
        second.extend_from_slice(&members[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok(Split { first, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(n: usize, events: usize) -> OutcomeColumn {
        OutcomeColumn::new(vec![1.0; n], (0..n).map(|i| i < events).collect()).unwrap()
    }

    #[test]
    fn exact_proportions() {
        let o = outcome(100, 20);
        let s = stratified_split(&o, 0.75, 7).unwrap();
        assert_eq!(s.first.len(), 75);
        assert_eq!(s.second.len(), 25);
        assert_eq!(s.first.iter().filter(|&&i| o.event[i]).count(), 15);
        assert_eq!(s.second.iter().filter(|&&i| o.event[i]).count(), 5);
    }

    #[test]
    fn deterministic_per_seed() {
        let o = outcome(300, 40);
        assert_eq!(
            stratified_split(&o, 0.75, 11).unwrap(),
            stratified_split(&o, 0.75, 11).unwrap()
        );
        assert_ne!(
            stratified_split(&o, 0.75, 11).unwrap(),
            stratified_split(&o, 0.75, 12).unwrap()
        );
    }

    #[test]
    fn nested_validation_split() {
        let o = outcome(400, 80);
        let outer = stratified_split(&o, 0.75, 1).unwrap();
        let train = o.select(&outer.first);
        let inner = stratified_split(&train, 0.75, 2).unwrap();
        assert_eq!(inner.first.len() + inner.second.len(), outer.first.len());
        assert_eq!(inner.first.len(), 225);
    }

    #[test]
    fn empty_stratum_is_an_error() {
        assert!(stratified_split(&outcome(10, 0), 0.75, 0).is_err());
        assert!(stratified_split(&outcome(10, 1), 0.75, 0).is_err());
        assert!(stratified_split(&outcome(10, 5), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_stratification(n in 8usize..400, event_share in 0.05f64..0.95, fraction in 0.2f64..0.8, seed in any::<u64>()) {
            let events = ((n as f64 * event_share) as usize).clamp(2, n - 2);
            let o = outcome(n, events);
            let s = stratified_split(&o, fraction, seed).unwrap();
            let mut all: Vec<usize> = s.first.iter().chain(&s.second).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let rate = |idx: &[usize]| idx.iter().filter(|&&i| o.event[i]).count() as f64 / idx.len() as f64;
            let overall = events as f64 / n as f64;
            let bound = 1.0 / s.first.len().min(s.second.len()) as f64;
            prop_assert!((rate(&s.first) - overall).abs() < bound);
            prop_assert!((rate(&s.second) - overall).abs() < bound);
        }
    }
}
