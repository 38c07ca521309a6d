use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::CoxFit;
use crate::stats::two_sided_normal_p;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxSummaryRow {
    pub covariate: String,
    pub log_hr: f64,
    pub hr: f64,
    pub se: f64,
    pub z: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// `-log2(p)` with p floored at the smallest positive normal double.
    pub neg_log2_p: f64,
}

/// Per-coefficient inference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxSummary {
    pub rows: Vec<CoxSummaryRow>,
}

/// Wald inference for every coefficient, in column order.
pub fn summarize(fit: &CoxFit) -> CoxSummary {
    let rows = fit
        .beta
        .iter()
        .zip(fit.standard_errors())
        .zip(&fit.column_names)
        .map(|((&b, se), name)| summary_row(name, b, se))
        .collect();
    CoxSummary { rows }
}

pub(crate) fn summary_row(name: &str, log_hr: f64, se: f64) -> CoxSummaryRow {
    let z = if se > 0.0 { log_hr / se } else { 0.0 };
    let p_value = if se > 0.0 { two_sided_normal_p(z) } else { 1.0 };
    CoxSummaryRow {
        covariate: name.to_string(),
        log_hr,
        hr: log_hr.exp(),
        se,
        z,
        ci_low: log_hr - Z_95 * se,
        ci_high: log_hr + Z_95 * se,
        p_value,
        neg_log2_p: -p_value.max(f64::MIN_POSITIVE).log2(),
    }
}

impl CoxSummary {
    /// Rows ordered by decreasing log hazard ratio.
    pub fn sorted_by_log_hr(&self) -> Self {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| b.log_hr.total_cmp(&a.log_hr));
        Self { rows }
    }

    pub fn row(&self, covariate: &str) -> Option<&CoxSummaryRow> {
        self.rows.iter().find(|r| r.covariate == covariate)
    }

    /// CSV with columns: covariate, log(HR), CI low, CI high, -log2(p).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("covariate,log(HR),CI low,CI high,-log2(p)\n");
        for r in &self.rows {
            let name = if r.covariate.contains([',', '"']) {
                format!("\"{}\"", r.covariate.replace('"', "\"\""))
            } else {
                r.covariate.clone()
            };
            let _ = writeln!(
                out,
                "{name},{},{},{},{}",
                r.log_hr, r.ci_low, r.ci_high, r.neg_log2_p
            );
        }
        out
    }

    /// Whitespace-aligned table with three decimals.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.covariate.len()).max().unwrap_or(9).max(9);
        let mut out = format!(
            "{:<width$} {:>8} {:>8} {:>8} {:>10}\n",
            "Covariate", "log(HR)", "CI low", "CI high", "-log2(p)"
        );
        for r in &self.rows {
            let _ = writeln!(out, "{}", format_row(r, width));
        }
        out
    }
}

/// `name log_hr ci_low ci_high -log2(p)` with three decimals.
pub fn format_row(r: &CoxSummaryRow, width: usize) -> String {
    format!(
        "{:<width$} {:>8.3} {:>8.3} {:>8.3} {:>10.3}",
        r.covariate, r.log_hr, r.ci_low, r.ci_high, r.neg_log2_p
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_coefficient() {
        let r = summary_row("x", 0.0, 1.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.ci_low, -1.959964);
        assert_eq!(r.ci_high, 1.959964);
        assert_eq!(r.hr, 1.0);
        assert_eq!(r.neg_log2_p, 0.0);
    }

    #[test]
    fn boundary_coefficient_has_p_005() {
        let r = summary_row("x", 1.959964, 1.0);
        assert!((r.p_value - 0.05).abs() < 1e-6);
    }

    #[test]
    fn extreme_z_is_floored() {
        let r = summary_row("age", 50.0, 0.1);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.neg_log2_p, 1022.0);
    }

    #[test]
    fn row_layout() {
        let r = CoxSummaryRow {
            covariate: "Diagnosis of atrial fibrillation and flutter (I48)".into(),
            log_hr: 0.716,
            hr: 0.716f64.exp(),
            se: 0.0316,
            z: 0.0,
            ci_low: 0.654,
            ci_high: 0.778,
            p_value: 0.0,
            neg_log2_p: 375.462,
        };
        let line = format_row(&r, 0);
        let squashed: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(
            squashed[squashed.len() - 4..].join(" "),
            "0.716 0.654 0.778 375.462"
        );
        assert!(line.starts_with("Diagnosis of atrial fibrillation and flutter (I48)"));
    }
}
