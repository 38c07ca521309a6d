//! Distribution tails and the two cohort-comparison tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

/// Two-sided p-value of a standard normal statistic.
pub fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Upper tail of the chi-squared distribution.
pub fn chi_squared_sf(statistic: f64, df: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    match ChiSquared::new(df) {
        Ok(dist) => dist.sf(statistic).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// Pearson chi-squared test of independence (no continuity correction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquaredTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Runs the test on an r×c contingency table given as rows. Returns `None`
/// when any expected cell count is zero (an empty row or column margin),
/// where the statistic is undefined.
pub fn chi_squared_independence(table: &[Vec<f64>]) -> Option<ChiSquaredTest> {
    let rows = table.len();
    let cols = table.first()?.len();
    if rows < 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return None;
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let total: f64 = row_sums.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = row_sums[i] * col_sums[j] / total;
            if expected <= 0.0 {
                return None;
            }
            statistic += (observed - expected).powi(2) / expected;
        }
    }
    let df = (rows - 1) * (cols - 1);
    Some(ChiSquaredTest {
        statistic,
        df,
        p_value: chi_squared_sf(statistic, df as f64),
    })
}

/// Kruskal-Wallis H test with the standard tie correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KruskalWallisTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn kruskal_wallis(groups: &[&[f64]]) -> Option<KruskalWallisTest> {
    let nonempty: Vec<&[f64]> = groups.iter().copied().filter(|g| !g.is_empty()).collect();
    if nonempty.len() < 2 {
        return None;
    }
    let mut pooled: Vec<(f64, usize)> = nonempty
        .iter()
        .enumerate()
        .flat_map(|(g, values)| values.iter().map(move |&v| (v, g)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let mut rank_sums = vec![0.0; nonempty.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        for item in &pooled[i..=j] {
            rank_sums[item.1] += avg_rank;
        }
        i = j + 1;
    }
    let nf = n as f64;
    let mut h = 0.0;
    for (g, values) in nonempty.iter().enumerate() {
        h += rank_sums[g] * rank_sums[g] / values.len() as f64;
    }
    h = 12.0 / (nf * (nf + 1.0)) * h - 3.0 * (nf + 1.0);
    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if correction <= 0.0 {
        // every value identical
        return Some(KruskalWallisTest {
            statistic: 0.0,
            df: nonempty.len() - 1,
            p_value: 1.0,
        });
    }
    let statistic = (h / correction).max(0.0);
    let df = nonempty.len() - 1;
    Some(KruskalWallisTest {
        statistic,
        df,
        p_value: chi_squared_sf(statistic, df as f64),
    })
}

/// Linear-interpolated quantile of sorted data (`q` in [0, 1]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
