use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::raw::{ColumnData, RawCohort};
use super::schema::{CohortSchema, FeatureKind};
use super::CohortError;
use crate::stats::{chi_squared_independence, kruskal_wallis, quantile_sorted};

/// One cell of the characteristics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SummaryCell {
    Count { n: usize, percent: f64 },
    Median { median: f64, q1: f64, q3: f64 },
}

impl std::fmt::Display for SummaryCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Count { n, percent } => write!(f, "{n} ({percent:.2})"),
            Self::Median { median, q1, q3 } => write!(f, "{median:.2} [{q1:.2}, {q3:.2}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    pub all: SummaryCell,
    pub no_event: SummaryCell,
    pub event: SummaryCell,
    /// `None` when the test is not applicable (degenerate table).
    pub p_value: Option<f64>,
}

/// Cohort characteristics split by outcome group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_all: usize,
    pub n_no_event: usize,
    pub n_event: usize,
    pub rows: Vec<SummaryRow>,
}

impl CohortSummary {
    /// Tab-separated rendering with one header row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "\tAll participants (n={})\tNo incident event (n={})\tIncident event (n={})\tp-value",
            self.n_all, self.n_no_event, self.n_event
        );
        for row in &self.rows {
            let label = match &row.level {
                Some(level) => format!("{}: {level}", row.feature),
                None => row.feature.clone(),
            };
            let p = match row.p_value {
                Some(p) if p < 0.001 => "<0.001".to_string(),
                Some(p) => format!("{p:.3}"),
                None => "n/a".to_string(),
            };
            let _ = writeln!(out, "{label}\t{}\t{}\t{}\t{p}", row.all, row.no_event, row.event);
        }
        out
    }
}

fn count_cell(n: usize, total: usize) -> SummaryCell {
    SummaryCell::Count {
        n,
        percent: if total == 0 { 0.0 } else { 100.0 * n as f64 / total as f64 },
    }
}

fn median_cell(values: &mut [f64]) -> SummaryCell {
    values.sort_by(f64::total_cmp);
    SummaryCell::Median {
        median: quantile_sorted(values, 0.5),
        q1: quantile_sorted(values, 0.25),
        q3: quantile_sorted(values, 0.75),
    }
}

/// Counts (%) for binary and leveled features with a chi-squared test,
/// median [Q1, Q3] for continuous ones with a Kruskal-Wallis test. Missing
/// values are left out of each statistic.
pub fn summarize_cohort(
    raw: &RawCohort,
    events: &[bool],
    schema: &CohortSchema,
) -> Result<CohortSummary, CohortError> {
    if events.len() != raw.n_rows() {
        return Err(CohortError::Outcome("event flags do not match cohort rows".into()));
    }
    let n_event = events.iter().filter(|&&e| e).count();
    let n_no_event = events.len() - n_event;
    if n_event == 0 || n_no_event == 0 {
        return Err(CohortError::Outcome("both outcome groups must be non-empty".into()));
    }
    let mut rows = Vec::new();
    for spec in &schema.features {
        let Some(column) = raw.column(&spec.name) else {
            continue;
        };
        match (spec.kind, column) {
            (FeatureKind::Continuous | FeatureKind::Derived, ColumnData::Numeric(v)) => {
                let mut all = Vec::new();
                let mut yes = Vec::new();
                let mut no = Vec::new();
                for (x, &e) in v.iter().zip(events) {
                    if let Some(x) = *x {
                        all.push(x);
                        if e {
                            yes.push(x)
                        } else {
                            no.push(x)
                        }
                    }
                }
                let p_value = kruskal_wallis(&[&no, &yes]).map(|t| t.p_value);
                rows.push(SummaryRow {
                    feature: spec.name.clone(),
                    level: None,
                    all: median_cell(&mut all),
                    no_event: median_cell(&mut no),
                    event: median_cell(&mut yes),
                    p_value,
                });
            }
            (FeatureKind::Binary, ColumnData::Numeric(v)) => {
                let mut table = vec![vec![0.0; 2]; 2];
                let (mut tot_no, mut tot_yes) = (0usize, 0usize);
                for (x, &e) in v.iter().zip(events) {
                    if let Some(x) = *x {
                        let level = usize::from(x != 0.0);
                        table[level][usize::from(e)] += 1.0;
                        if e {
                            tot_yes += 1
                        } else {
                            tot_no += 1
                        }
                    }
                }
                let p_value = chi_squared_independence(&table).map(|t| t.p_value);
                let pos_no = table[1][0] as usize;
                let pos_yes = table[1][1] as usize;
                rows.push(SummaryRow {
                    feature: spec.name.clone(),
                    level: None,
                    all: count_cell(pos_no + pos_yes, tot_no + tot_yes),
                    no_event: count_cell(pos_no, tot_no),
                    event: count_cell(pos_yes, tot_yes),
                    p_value,
                });
            }
            (_, ColumnData::Levels(v)) => {
                let levels = spec.levels();
                let mut table = vec![vec![0.0; 2]; levels.len()];
                let (mut tot_no, mut tot_yes) = (0usize, 0usize);
                for (x, &e) in v.iter().zip(events) {
                    let Some(x) = x else { continue };
                    let Some(k) = levels.iter().position(|l| l == x) else {
                        continue;
                    };
                    table[k][usize::from(e)] += 1.0;
                    if e {
                        tot_yes += 1
                    } else {
                        tot_no += 1
                    }
                }
                let p_value = chi_squared_independence(&table).map(|t| t.p_value);
                for (k, level) in levels.iter().enumerate() {
                    let no = table[k][0] as usize;
                    let yes = table[k][1] as usize;
                    rows.push(SummaryRow {
                        feature: spec.name.clone(),
                        level: Some(level.clone()),
                        all: count_cell(no + yes, tot_no + tot_yes),
                        no_event: count_cell(no, tot_no),
                        event: count_cell(yes, tot_yes),
                        p_value,
                    });
                }
            }
            _ => {
                return Err(CohortError::Schema(format!(
                    "column '{}' does not match its declared kind",
                    spec.name
                )))
            }
        }
    }
    Ok(CohortSummary {
        n_all: events.len(),
        n_no_event,
        n_event,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::schema::{FeatureSpec, OutcomeSpec};

    fn schema() -> CohortSchema {
        CohortSchema::new(
            vec![FeatureSpec::binary("b"), FeatureSpec::continuous("x")],
            OutcomeSpec::Duration {
                duration: "t".into(),
                event: "e".into(),
            },
        )
    }

    fn cohort(b: Vec<f64>, x: Vec<f64>) -> RawCohort {
        RawCohort {
            row_ids: (0..b.len()).map(|i| i.to_string()).collect(),
            columns: [
                ("b".to_string(), ColumnData::Numeric(b.into_iter().map(Some).collect())),
                ("x".to_string(), ColumnData::Numeric(x.into_iter().map(Some).collect())),
            ]
            .into_iter()
            .collect(),
            auxiliary: Default::default(),
        }
    }

    #[test]
    fn identical_groups_have_p_one() {
        let b = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let x = vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        let events = vec![true, true, false, false, true, true, false, false];
        let s = summarize_cohort(&cohort(b, x), &events, &schema()).unwrap();
        assert!((s.rows[0].p_value.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfectly_associated_binary() {
        let b: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 0.0 }).collect();
        let events: Vec<bool> = (0..20).map(|i| i < 10).collect();
        let x = vec![0.0; 20];
        let s = summarize_cohort(&cohort(b, x), &events, &schema()).unwrap();
        assert!(s.rows[0].p_value.unwrap() < 0.001);
        assert_eq!(s.rows[0].event, SummaryCell::Count { n: 10, percent: 100.0 });
        let text = s.render();
        assert!(text.contains("10 (50.00)"), "{text}");
    }

    #[test]
    fn shifted_continuous_feature() {
        // group sizes 50/50; event group shifted by +3 on a spread of 0..5
        let n = 100;
        let x: Vec<f64> = (0..n)
            .map(|i| (i % 50) as f64 / 10.0 + if i >= 50 { 3.0 } else { 0.0 })
            .collect();
        let events: Vec<bool> = (0..n).map(|i| i >= 50).collect();
        let s = summarize_cohort(&cohort(vec![0.0; n], x.clone()), &events, &schema()).unwrap();
        let p = s.rows[1].p_value.unwrap();

        // rank-sum oracle: Mann-Whitney-equivalent H from explicit ranks
        let mut pooled: Vec<(f64, bool)> = x.iter().copied().zip(events.iter().copied()).collect();
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut ranks = vec![0.0; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
                j += 1;
            }
            for r in ranks.iter_mut().take(j + 1).skip(i) {
                *r = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        let r_event: f64 = (0..n).filter(|&k| pooled[k].1).map(|k| ranks[k]).sum();
        let r_none: f64 = (0..n).filter(|&k| !pooled[k].1).map(|k| ranks[k]).sum();
        let nf = n as f64;
        let h_raw = 12.0 / (nf * (nf + 1.0)) * (r_event * r_event / 50.0 + r_none * r_none / 50.0) - 3.0 * (nf + 1.0);
        assert!(h_raw > 6.63, "H = {h_raw}"); // chi2(1) 0.99 quantile
        assert!(p < 0.01, "p = {p}");
    }

    #[test]
    fn empty_group_is_rejected() {
        let s = summarize_cohort(&cohort(vec![1.0], vec![1.0]), &[true], &schema());
        assert!(s.is_err());
    }
}
