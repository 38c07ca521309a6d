use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::raw::{ColumnData, RawCohort};
use super::schema::{CohortSchema, FeatureKind};
use super::CohortError;

/// Replacement value for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FillValue {
    Number(f64),
    Level(String),
}

/// Frozen imputation values: mean for continuous and derived columns, mode
/// for binary and leveled ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationStats {
    pub fills: IndexMap<String, FillValue>,
}

impl ImputationStats {
    /// Computes fill values from `source` (normally the training split).
    pub fn fit(source: &RawCohort, schema: &CohortSchema) -> Result<Self, CohortError> {
        let mut fills = IndexMap::new();
        for spec in &schema.features {
            let Some(column) = source.column(&spec.name) else {
                continue;
            };
            let fill = match (spec.kind, column) {
                (FeatureKind::Continuous | FeatureKind::Derived, ColumnData::Numeric(v)) => {
                    let present: Vec<f64> = v.iter().flatten().copied().collect();
                    if present.is_empty() {
                        return Err(CohortError::AllMissing(spec.name.clone()));
                    }
                    FillValue::Number(present.iter().sum::<f64>() / present.len() as f64)
                }
                (FeatureKind::Binary, ColumnData::Numeric(v)) => {
                    let present: Vec<f64> = v.iter().flatten().copied().collect();
                    if present.is_empty() {
                        return Err(CohortError::AllMissing(spec.name.clone()));
                    }
                    let ones = present.iter().filter(|&&x| x != 0.0).count();
                    // ties go to 0
                    FillValue::Number(if 2 * ones > present.len() { 1.0 } else { 0.0 })
                }
                (_, ColumnData::Levels(v)) => {
                    let mut counts: IndexMap<&str, usize> =
                        spec.levels().iter().map(|l| (l.as_str(), 0)).collect();
                    for level in v.iter().flatten() {
                        *counts.entry(level.as_str()).or_insert(0) += 1;
                    }
                    // first maximum in schema order wins
                    let (level, count) = counts
                        .iter()
                        .fold(("", 0usize), |best, (l, &c)| if c > best.1 { (l, c) } else { best });
                    if count == 0 {
                        return Err(CohortError::AllMissing(spec.name.clone()));
                    }
                    FillValue::Level(level.to_string())
                }
                _ => {
                    return Err(CohortError::Schema(format!(
                        "column '{}' does not match its declared kind",
                        spec.name
                    )))
                }
            };
            fills.insert(spec.name.clone(), fill);
        }
        Ok(Self { fills })
    }

    /// Fills every missing value. Present values are never touched.
    pub fn apply(&self, raw: &RawCohort) -> Result<RawCohort, CohortError> {
        let mut out = raw.clone();
        for (name, column) in out.columns.iter_mut() {
            if column.missing_count() == 0 {
                continue;
            }
            let fill = self
                .fills
                .get(name)
                .ok_or_else(|| CohortError::Schema(format!("no imputation value for '{name}'")))?;
            match (column, fill) {
                (ColumnData::Numeric(v), FillValue::Number(x)) => {
                    v.iter_mut().filter(|c| c.is_none()).for_each(|c| *c = Some(*x));
                }
                (ColumnData::Levels(v), FillValue::Level(l)) => {
                    v.iter_mut()
                        .filter(|c| c.is_none())
                        .for_each(|c| *c = Some(l.clone()));
                }
                _ => {
                    return Err(CohortError::Schema(format!(
                        "imputation value for '{name}' has the wrong type"
                    )))
                }
            }
        }
        Ok(out)
    }
}

/// Imputes `raw` with statistics computed from `stats_source`.
pub fn impute_mean(
    raw: &RawCohort,
    stats_source: &RawCohort,
    schema: &CohortSchema,
) -> Result<RawCohort, CohortError> {
    ImputationStats::fit(stats_source, schema)?.apply(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::schema::{FeatureSpec, OutcomeSpec};

    fn schema() -> CohortSchema {
        CohortSchema::new(
            vec![
                FeatureSpec::continuous("x"),
                FeatureSpec::binary("b"),
                FeatureSpec::categorical("c", ["lo", "mid", "hi"]),
            ],
            OutcomeSpec::Duration {
                duration: "t".into(),
                event: "e".into(),
            },
        )
    }

    fn cohort(x: Vec<Option<f64>>, b: Vec<Option<f64>>, c: Vec<Option<&str>>) -> RawCohort {
        RawCohort {
            row_ids: (0..x.len()).map(|i| i.to_string()).collect(),
            columns: [
                ("x".to_string(), ColumnData::Numeric(x)),
                ("b".to_string(), ColumnData::Numeric(b)),
                (
                    "c".to_string(),
                    ColumnData::Levels(c.into_iter().map(|s| s.map(String::from)).collect()),
                ),
            ]
            .into_iter()
            .collect(),
            auxiliary: Default::default(),
        }
    }

    #[test]
    fn mean_of_present_values() {
        let raw = cohort(
            vec![Some(1.0), None, Some(3.0)],
            vec![Some(1.0), Some(1.0), Some(0.0)],
            vec![Some("lo"), Some("lo"), Some("hi")],
        );
        let out = impute_mean(&raw, &raw, &schema()).unwrap();
        assert_eq!(
            out.columns["x"].as_numeric().unwrap(),
            &[Some(1.0), Some(2.0), Some(3.0)]
        );
    }

    #[test]
    fn complete_input_is_unchanged() {
        let raw = cohort(
            vec![Some(1.0), Some(5.0)],
            vec![Some(1.0), Some(0.0)],
            vec![Some("lo"), Some("mid")],
        );
        assert_eq!(impute_mean(&raw, &raw, &schema()).unwrap(), raw);
    }

    #[test]
    fn test_split_uses_train_statistics() {
        // hand computation: train x = {2, 4, 9} -> mean 5; b = {1,1,0} -> mode 1;
        // c = {mid, hi, mid} -> mode mid. Test split has its own mean 100.
        let train = cohort(
            vec![Some(2.0), Some(4.0), Some(9.0)],
            vec![Some(1.0), Some(1.0), Some(0.0)],
            vec![Some("mid"), Some("hi"), Some("mid")],
        );
        let test = cohort(
            vec![Some(100.0), None, Some(100.0)],
            vec![None, Some(0.0), Some(0.0)],
            vec![Some("lo"), Some("lo"), None],
        );
        let out = impute_mean(&test, &train, &schema()).unwrap();
        assert_eq!(
            out.columns["x"].as_numeric().unwrap(),
            &[Some(100.0), Some(5.0), Some(100.0)]
        );
        assert_eq!(out.columns["b"].as_numeric().unwrap()[0], Some(1.0));
        assert_eq!(
            out.columns["c"].as_levels().unwrap()[2].as_deref(),
            Some("mid")
        );
    }

    #[test]
    fn all_missing_column_is_named() {
        let raw = cohort(
            vec![None, None],
            vec![Some(1.0), Some(0.0)],
            vec![Some("lo"), Some("mid")],
        );
        let err = ImputationStats::fit(&raw, &schema()).unwrap_err();
        assert!(matches!(err, CohortError::AllMissing(c) if c == "x"));
    }
}
