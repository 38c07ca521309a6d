use super::MetricsError;

/// Fenwick tree of counts over compressed risk ranks.
struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, index: usize) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< index`.
    fn prefix(&self, index: usize) -> u64 {
        let mut i = index;
        let mut total = 0;
        while i > 0 {
            total += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

/// Pair counts behind a concordance index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub concordant: u64,
    pub tied_risk: u64,
    pub comparable: u64,
}

impl PairCounts {
    pub fn c_index(&self) -> Option<f64> {
        (self.comparable > 0)
            .then(|| (self.concordant as f64 + 0.5 * self.tied_risk as f64) / self.comparable as f64)
    }
}

fn check(risks: &[f64], durations: &[f64], events: &[bool]) -> Result<(), MetricsError> {
    if risks.len() != durations.len() || risks.len() != events.len() {
        return Err(MetricsError::Length);
    }
    if risks.iter().chain(durations).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

/// Harrell's pair counts in O(N log N). A pair is comparable when the
/// shorter time is strictly shorter and ends in an event.
pub fn concordance_counts(risks: &[f64], durations: &[f64], events: &[bool]) -> Result<PairCounts, MetricsError> {
    check(risks, durations, events)?;
    let n = risks.len();
    let mut sorted_risks = risks.to_vec();
    sorted_risks.sort_by(f64::total_cmp);
    sorted_risks.dedup();
    let rank = |r: f64| sorted_risks.partition_point(|&s| s < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]));

    let mut tree = Fenwick::new(sorted_risks.len());
    let mut inserted = 0u64;
    let mut counts = PairCounts::default();
    let mut start = 0;
    while start < n {
        let t = durations[order[start]];
        let mut end = start + 1;
        while end < n && durations[order[end]] == t {
            end += 1;
        }
        for &i in &order[start..end] {
            if events[i] {
                let k = rank(risks[i]);
                let below = tree.prefix(k);
                let at_or_below = tree.prefix(k + 1);
                counts.concordant += below;
                counts.tied_risk += at_or_below - below;
                counts.comparable += inserted;
            }
        }
        for &i in &order[start..end] {
            tree.add(rank(risks[i]));
            inserted += 1;
        }
        start = end;
    }
    Ok(counts)
}

/// Harrell's concordance index: among comparable pairs, the share in
/// which the earlier event has the higher risk, tied risks counting 1/2.
pub fn concordance_index(risks: &[f64], durations: &[f64], events: &[bool]) -> Result<f64, MetricsError> {
    concordance_counts(risks, durations, events)?
        .c_index()
        .ok_or(MetricsError::NoComparablePairs)
}

/// Quadratic pair enumeration. Reference implementation for tests.
pub fn concordance_counts_brute_force(risks: &[f64], durations: &[f64], events: &[bool]) -> PairCounts {
    let mut counts = PairCounts::default();
    for i in 0..risks.len() {
        if !events[i] {
            continue;
        }
        for j in 0..risks.len() {
            if durations[i] < durations[j] {
                counts.comparable += 1;
                if risks[i] > risks[j] {
                    counts.concordant += 1;
                } else if risks[i] == risks[j] {
                    counts.tied_risk += 1;
                }
            }
        }
    }
    counts
}
