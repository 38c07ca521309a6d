use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::raw::{ColumnData, RawCohort};
use super::schema::{CohortSchema, FeatureKind};
use super::CohortError;

/// How a design column was produced from its source feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Encoding {
    /// z-score with population mean and sd (divide by N). A zero sd encodes
    /// the column as all zeros.
    Standardized { mean: f64, sd: f64 },
    /// 0/1 pass-through.
    Binary,
    /// Indicator of one level.
    OneHot { level: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub source: String,
    pub encoding: Encoding,
}

impl ColumnMeta {
    /// Binary and one-hot columns are indicators.
    pub fn is_indicator(&self) -> bool {
        !matches!(self.encoding, Encoding::Standardized { .. })
    }
}

/// Dense N×p design matrix with column provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub values: Array2<f64>,
    pub column_names: Vec<String>,
    pub column_meta: Vec<ColumnMeta>,
}

impl DesignMatrix {
    /// Plain numeric design, every column marked as already standardized.
    pub fn from_values(values: Array2<f64>, column_names: Vec<String>) -> Self {
        let column_meta = column_names
            .iter()
            .map(|n| ColumnMeta {
                name: n.clone(),
                source: n.clone(),
                encoding: Encoding::Standardized { mean: 0.0, sd: 1.0 },
            })
            .collect();
        Self {
            values,
            column_names,
            column_meta,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(1), cols),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            column_meta: cols.iter().map(|&c| self.column_meta[c].clone()).collect(),
        }
    }

    /// Columns by name, in the order given.
    pub fn select_named(&self, names: &[String]) -> Result<Self, CohortError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| CohortError::MissingColumn(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(self.select_columns(&idx))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
            column_names: self.column_names.clone(),
            column_meta: self.column_meta.clone(),
        }
    }
}

/// What to do with a level not listed in the schema at transform time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnseenLevels {
    #[default]
    Strict,
    /// Encode the row as zero for every level.
    Lenient,
}

/// Frozen encoding: one-hot levels and standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub columns: Vec<ColumnMeta>,
}

fn population_mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Encoder {
    /// Learns standardization statistics from `raw`, which must be complete.
    pub fn fit(raw: &RawCohort, schema: &CohortSchema) -> Result<Self, CohortError> {
        let mut columns = Vec::new();
        for spec in &schema.features {
            let Some(column) = raw.column(&spec.name) else {
                continue;
            };
            match spec.kind {
                FeatureKind::Continuous | FeatureKind::Derived => {
                    let values = complete_numeric(column, &spec.name)?;
                    if values.is_empty() {
                        return Err(CohortError::AllMissing(spec.name.clone()));
                    }
                    let (mean, sd) = population_mean_sd(values.iter().copied());
                    columns.push(ColumnMeta {
                        name: spec.name.clone(),
                        source: spec.name.clone(),
                        encoding: Encoding::Standardized { mean, sd },
                    });
                }
                FeatureKind::Binary => columns.push(ColumnMeta {
                    name: spec.name.clone(),
                    source: spec.name.clone(),
                    encoding: Encoding::Binary,
                }),
                FeatureKind::Categorical | FeatureKind::Ordinal => {
                    for level in spec.levels() {
                        columns.push(ColumnMeta {
                            name: one_hot_name(&spec.name, level),
                            source: spec.name.clone(),
                            encoding: Encoding::OneHot {
                                level: level.clone(),
                            },
                        });
                    }
                }
            }
        }
        Ok(Self { columns })
    }

    /// Encodes a complete cohort.
    pub fn transform(&self, raw: &RawCohort, unseen: UnseenLevels) -> Result<DesignMatrix, CohortError> {
        let n = raw.n_rows();
        let p = self.columns.len();
        let mut values = Array2::<f64>::zeros((n, p));
        let mut j = 0;
        while j < p {
            let meta = &self.columns[j];
            let column = raw
                .column(&meta.source)
                .ok_or_else(|| CohortError::MissingColumn(meta.source.clone()))?;
            match &meta.encoding {
                Encoding::Standardized { mean, sd } => {
                    let xs = complete_numeric(column, &meta.source)?;
                    let scale = if *sd > 0.0 { *sd } else { 1.0 };
                    for (i, x) in xs.into_iter().enumerate() {
                        values[[i, j]] = if *sd > 0.0 { (x - mean) / scale } else { 0.0 };
                    }
                    j += 1;
                }
                Encoding::Binary => {
                    let xs = complete_numeric(column, &meta.source)?;
                    for (i, x) in xs.into_iter().enumerate() {
                        if x != 0.0 && x != 1.0 {
                            return Err(CohortError::Parse {
                                row: i + 1,
                                column: meta.source.clone(),
                                value: x.to_string(),
                            });
                        }
                        values[[i, j]] = x;
                    }
                    j += 1;
                }
                Encoding::OneHot { .. } => {
                    // the block of consecutive columns for this source
                    let end = (j..p)
                        .find(|&k| {
                            self.columns[k].source != meta.source
                                || !matches!(self.columns[k].encoding, Encoding::OneHot { .. })
                        })
                        .unwrap_or(p);
                    let levels = column.as_levels().ok_or_else(|| {
                        CohortError::Schema(format!("'{}' is not a leveled column", meta.source))
                    })?;
                    for (i, level) in levels.iter().enumerate() {
                        let level = level.as_deref().ok_or_else(|| CohortError::MissingValue {
                            column: meta.source.clone(),
                            row: i + 1,
                        })?;
                        let hit = (j..end).find(|&k| {
                            matches!(&self.columns[k].encoding, Encoding::OneHot { level: l } if l == level)
                        });
                        match (hit, unseen) {
                            (Some(k), _) => values[[i, k]] = 1.0,
                            (None, UnseenLevels::Lenient) => {}
                            (None, UnseenLevels::Strict) => {
                                return Err(CohortError::UnseenLevel {
                                    column: meta.source.clone(),
                                    level: level.to_string(),
                                })
                            }
                        }
                    }
                    j = end;
                }
            }
        }
        Ok(DesignMatrix {
            values,
            column_names: self.columns.iter().map(|c| c.name.clone()).collect(),
            column_meta: self.columns.clone(),
        })
    }
}

pub fn one_hot_name(feature: &str, level: &str) -> String {
    format!("{feature}={level}")
}

fn complete_numeric(column: &ColumnData, name: &str) -> Result<Vec<f64>, CohortError> {
    let values = column
        .as_numeric()
        .ok_or_else(|| CohortError::Schema(format!("'{name}' is not a numeric column")))?;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Some(x) if x.is_finite() => Ok(*x),
            Some(x) => Err(CohortError::Parse {
                row: i + 1,
                column: name.to_string(),
                value: x.to_string(),
            }),
            None => Err(CohortError::MissingValue {
                column: name.to_string(),
                row: i + 1,
            }),
        })
        .collect()
}

/// Encodes `raw`, reusing `fit_stats` when given and otherwise fitting on
/// `raw` itself.
pub fn encode(
    raw: &RawCohort,
    schema: &CohortSchema,
    fit_stats: Option<&Encoder>,
    unseen: UnseenLevels,
) -> Result<DesignMatrix, CohortError> {
    match fit_stats {
        Some(enc) => enc.transform(raw, unseen),
        None => Encoder::fit(raw, schema)?.transform(raw, unseen),
    }
}

/// Result of dropping rare indicator columns.
#[derive(Debug, Clone)]
pub struct Pruned {
    pub design: DesignMatrix,
    pub dropped: Vec<String>,
}

/// Drops binary and one-hot columns whose share of nonzero entries is below
/// `min_prevalence`. Standardized columns are never dropped.
pub fn prune_rare(design: &DesignMatrix, min_prevalence: f64) -> Pruned {
    let n = design.n_rows().max(1) as f64;
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (j, meta) in design.column_meta.iter().enumerate() {
        if meta.is_indicator() {
            let positives = design.values.column(j).iter().filter(|&&x| x != 0.0).count();
            if (positives as f64) / n < min_prevalence {
                dropped.push(meta.name.clone());
                continue;
            }
        }
        keep.push(j);
    }
    Pruned {
        design: design.select_columns(&keep),
        dropped,
    }
}

pub const DEFAULT_MIN_PREVALENCE: f64 = 0.002;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::schema::{FeatureSpec, OutcomeSpec};

    fn schema() -> CohortSchema {
        CohortSchema::new(
            vec![
                FeatureSpec::continuous("x"),
                FeatureSpec::categorical("c", ["a", "b", "z"]),
                FeatureSpec::binary("flag"),
            ],
            OutcomeSpec::Duration {
                duration: "t".into(),
                event: "e".into(),
            },
        )
    }

    fn raw(x: &[f64], c: &[&str], flag: &[f64]) -> RawCohort {
        RawCohort {
            row_ids: (0..x.len()).map(|i| i.to_string()).collect(),
            columns: [
                ("x".to_string(), ColumnData::Numeric(x.iter().map(|&v| Some(v)).collect())),
                (
                    "c".to_string(),
                    ColumnData::Levels(c.iter().map(|s| Some(s.to_string())).collect()),
                ),
                (
                    "flag".to_string(),
                    ColumnData::Numeric(flag.iter().map(|&v| Some(v)).collect()),
                ),
            ]
            .into_iter()
            .collect(),
            auxiliary: Default::default(),
        }
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let r = raw(&[0.0, 1.0, 2.0, 3.0], &["a", "b", "z", "a"], &[0.0, 1.0, 0.0, 1.0]);
        let d = encode(&r, &schema(), None, UnseenLevels::Strict).unwrap();
        assert_eq!(d.column_names, vec!["x", "c=a", "c=b", "c=z", "flag"]);
        for i in 0..4 {
            let s: f64 = (1..4).map(|j| d.values[[i, j]]).sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn two_point_z_score() {
        let r = raw(&[0.0, 2.0], &["a", "b"], &[0.0, 1.0]);
        let d = encode(&r, &schema(), None, UnseenLevels::Strict).unwrap();
        assert_eq!(d.values[[0, 0]], -1.0);
        assert_eq!(d.values[[1, 0]], 1.0);
        assert_eq!(
            d.column_meta[0].encoding,
            Encoding::Standardized { mean: 1.0, sd: 1.0 }
        );
    }

    #[test]
    fn test_split_reuses_train_statistics() {
        // train x = {1, 3, 5, 7}: mean 4, population sd sqrt(5)
        let train = raw(&[1.0, 3.0, 5.0, 7.0], &["a", "b", "a", "b"], &[0.0, 1.0, 0.0, 1.0]);
        let enc = Encoder::fit(&train, &schema()).unwrap();
        let test = raw(&[4.0, 9.0], &["z", "a"], &[1.0, 0.0]);
        let d = encode(&test, &schema(), Some(&enc), UnseenLevels::Strict).unwrap();
        assert_eq!(d.values[[0, 0]], 0.0);
        assert_eq!(d.values[[1, 0]], 5.0 / 5f64.sqrt());
        assert_eq!(d.values[[0, 3]], 1.0);
    }

    #[test]
    fn unseen_level_strict_and_lenient() {
        let train = raw(&[1.0, 2.0], &["a", "b"], &[0.0, 1.0]);
        let enc = Encoder::fit(&train, &schema()).unwrap();
        let test = raw(&[1.0], &["q"], &[0.0]);
        let err = enc.transform(&test, UnseenLevels::Strict).unwrap_err();
        assert!(matches!(err, CohortError::UnseenLevel { ref level, .. } if level == "q"));
        let d = enc.transform(&test, UnseenLevels::Lenient).unwrap();
        assert_eq!((1..4).map(|j| d.values[[0, j]]).sum::<f64>(), 0.0);
    }

    #[test]
    fn missing_values_are_rejected() {
        let mut r = raw(&[1.0, 2.0], &["a", "b"], &[0.0, 1.0]);
        r.columns.insert("x".into(), ColumnData::Numeric(vec![Some(1.0), None]));
        assert!(matches!(
            encode(&r, &schema(), None, UnseenLevels::Strict),
            Err(CohortError::MissingValue { .. })
        ));
    }

    fn indicator_design(positives: usize, n: usize) -> DesignMatrix {
        let mut values = Array2::<f64>::zeros((n, 2));
        for i in 0..positives {
            values[[i, 0]] = 1.0;
        }
        for i in 0..n {
            values[[i, 1]] = if i % 2 == 0 { 0.0 } else { 0.001 };
        }
        DesignMatrix {
            values,
            column_names: vec!["dx".into(), "cont".into()],
            column_meta: vec![
                ColumnMeta {
                    name: "dx".into(),
                    source: "dx".into(),
                    encoding: Encoding::Binary,
                },
                ColumnMeta {
                    name: "cont".into(),
                    source: "cont".into(),
                    encoding: Encoding::Standardized { mean: 0.0, sd: 1.0 },
                },
            ],
        }
    }

    #[test]
    fn prune_drops_below_threshold_only() {
        let p = prune_rare(&indicator_design(1, 1000), DEFAULT_MIN_PREVALENCE);
        assert_eq!(p.dropped, vec!["dx".to_string()]);
        assert_eq!(p.design.column_names, vec!["cont".to_string()]);
        let p = prune_rare(&indicator_design(2, 1000), DEFAULT_MIN_PREVALENCE);
        assert!(p.dropped.is_empty());
    }

    #[test]
    fn prune_ignores_continuous_columns() {
        let p = prune_rare(&indicator_design(500, 1000), 0.9);
        assert_eq!(p.dropped, vec!["dx".to_string()]);
        assert!(p.design.column_index("cont").is_some());
    }
}
