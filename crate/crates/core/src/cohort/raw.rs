use std::collections::HashMap;
use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::schema::{parse_day, CohortSchema, FeatureKind, OutcomeSpec};
use super::CohortError;

/// Values of one raw column. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "snake_case")]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Levels(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            Self::Numeric(v) => v.len(),
            Self::Levels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn missing_count(&self) -> usize {
        match self {
            Self::Numeric(v) => v.iter().filter(|x| x.is_none()).count(),
            Self::Levels(v) => v.iter().filter(|x| x.is_none()).count(),
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Self::Numeric(v) => v[row].is_none(),
            Self::Levels(v) => v[row].is_none(),
        }
    }

    pub fn as_numeric(&self) -> Option<&[Option<f64>]> {
        match self {
            Self::Numeric(v) => Some(v),
            Self::Levels(_) => None,
        }
    }

    pub fn as_levels(&self) -> Option<&[Option<String>]> {
        match self {
            Self::Levels(v) => Some(v),
            Self::Numeric(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            Self::Numeric(v) => Self::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Self::Levels(v) => Self::Levels(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }
}

/// A single raw value as it appears before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Level(String),
}

/// Column-oriented raw cohort. Feature columns follow schema order; outcome
/// and exclusion columns are kept as numbers (dates as day counts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCohort {
    pub row_ids: Vec<String>,
    pub columns: IndexMap<String, ColumnData>,
    #[serde(default)]
    pub auxiliary: IndexMap<String, Vec<Option<f64>>>,
}

impl RawCohort {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.columns.get(name)
    }

    pub fn missing_total(&self) -> usize {
        self.columns.values().map(ColumnData::missing_count).sum()
    }

    pub fn value(&self, column: &str, row: usize) -> Option<RawValue> {
        match self.columns.get(column)? {
            ColumnData::Numeric(v) => v[row].map(RawValue::Number),
            ColumnData::Levels(v) => v[row].clone().map(RawValue::Level),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|(k, c)| (k.clone(), c.select(rows)))
                .collect(),
            auxiliary: self
                .auxiliary
                .iter()
                .map(|(k, c)| (k.clone(), rows.iter().map(|&r| c[r]).collect()))
                .collect(),
        }
    }

    /// Builds a one-row cohort from a feature map, typed by the schema.
    /// Features absent from the map are missing.
    pub fn from_feature_map(
        schema: &CohortSchema,
        values: &HashMap<String, Option<RawValue>>,
        row_id: &str,
    ) -> Result<Self, CohortError> {
        for name in values.keys() {
            match schema.feature(name) {
                Some(spec) if spec.kind != FeatureKind::Derived => {}
                _ => return Err(CohortError::UnknownColumn(name.clone())),
            }
        }
        let mut columns = IndexMap::new();
        for spec in schema.source_features() {
            let value = values.get(&spec.name).cloned().flatten();
            let data = if spec.kind.is_leveled() {
                let level = match value {
                    None => None,
                    Some(RawValue::Level(s)) => Some(s),
                    Some(RawValue::Number(x)) => Some(format_number(x)),
                };
                ColumnData::Levels(vec![level])
            } else {
                let number = match value {
                    None => None,
                    Some(RawValue::Number(x)) => Some(x),
                    Some(RawValue::Level(s)) => Some(parse_numeric(spec.kind, &s).ok_or_else(|| {
                        CohortError::Parse {
                            row: 1,
                            column: spec.name.clone(),
                            value: s.clone(),
                        }
                    })?),
                };
                ColumnData::Numeric(vec![number])
            };
            columns.insert(spec.name.clone(), data);
        }
        Ok(Self {
            row_ids: vec![row_id.to_string()],
            columns,
            auxiliary: IndexMap::new(),
        })
    }
}

pub(crate) fn is_missing_token(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

fn parse_binary(text: &str) -> Option<f64> {
    match text.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" => Some(1.0),
        "0" | "0.0" | "false" | "no" => Some(0.0),
        _ => None,
    }
}

fn parse_numeric(kind: FeatureKind, text: &str) -> Option<f64> {
    match kind {
        FeatureKind::Binary => parse_binary(text),
        _ => text.trim().parse::<f64>().ok().filter(|x| x.is_finite()),
    }
}

fn format_number(x: f64) -> String {
    format!("{x}")
}

/// Reads an RFC-4180 CSV with a header row. The header must contain exactly
/// the schema's source features plus outcome, exclusion and id columns, in
/// any order.
pub fn load_cohort<R: Read>(reader: R, schema: &CohortSchema) -> Result<RawCohort, CohortError> {
    schema.validate()?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = csv.headers()?.clone();

    let aux_cols = schema.auxiliary_columns();
    let mut expected: Vec<&str> = schema.source_features().map(|f| f.name.as_str()).collect();
    expected.extend(aux_cols.iter().copied());
    if let Some(id) = &schema.id_column {
        expected.push(id);
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if !expected.contains(&h) {
            return Err(CohortError::UnknownColumn(h.to_string()));
        }
        if index.insert(h, i).is_some() {
            return Err(CohortError::Schema(format!("duplicate CSV column '{h}'")));
        }
    }
    for name in &expected {
        if !index.contains_key(name) {
            return Err(CohortError::MissingColumn(name.to_string()));
        }
    }

    let sources: Vec<_> = schema.source_features().collect();
    let mut numeric: Vec<Vec<Option<f64>>> = vec![Vec::new(); sources.len()];
    let mut leveled: Vec<Vec<Option<String>>> = vec![Vec::new(); sources.len()];
    let mut aux: Vec<Vec<Option<f64>>> = vec![Vec::new(); aux_cols.len()];
    let mut row_ids = Vec::new();
    let is_date = |name: &str| match &schema.outcome {
        OutcomeSpec::Dates { .. } => true,
        OutcomeSpec::Duration { duration, .. } => name != duration && !is_event_column(schema, name),
    };

    for (row, record) in csv.records().enumerate() {
        let record = record?;
        let line = row + 1;
        for (k, spec) in sources.iter().enumerate() {
            let cell = &record[index[spec.name.as_str()]];
            if is_missing_token(cell) {
                numeric[k].push(None);
                leveled[k].push(None);
                continue;
            }
            if spec.kind.is_leveled() {
                leveled[k].push(Some(cell.trim().to_string()));
            } else {
                let parsed = parse_numeric(spec.kind, cell).ok_or_else(|| CohortError::Parse {
                    row: line,
                    column: spec.name.clone(),
                    value: cell.to_string(),
                })?;
                numeric[k].push(Some(parsed));
            }
        }
        for (k, name) in aux_cols.iter().enumerate() {
            let cell = &record[index[name]];
            if is_missing_token(cell) {
                aux[k].push(None);
                continue;
            }
            let parsed = if is_event_column(schema, name) {
                parse_binary(cell)
            } else if is_date(name) {
                parse_day(cell).map(|d| d.0 as f64)
            } else {
                cell.trim().parse::<f64>().ok().filter(|x| x.is_finite())
            };
            let parsed = parsed.ok_or_else(|| CohortError::Parse {
                row: line,
                column: name.to_string(),
                value: cell.to_string(),
            })?;
            aux[k].push(Some(parsed));
        }
        row_ids.push(match &schema.id_column {
            Some(id) => record[index[id.as_str()]].to_string(),
            None => line.to_string(),
        });
    }

    let mut columns = IndexMap::new();
    for (k, spec) in sources.iter().enumerate() {
        let data = if spec.kind.is_leveled() {
            ColumnData::Levels(std::mem::take(&mut leveled[k]))
        } else {
            ColumnData::Numeric(std::mem::take(&mut numeric[k]))
        };
        columns.insert(spec.name.clone(), data);
    }
    let auxiliary = aux_cols
        .iter()
        .zip(aux)
        .map(|(name, v)| (name.to_string(), v))
        .collect();
    Ok(RawCohort {
        row_ids,
        columns,
        auxiliary,
    })
}

fn is_event_column(schema: &CohortSchema, name: &str) -> bool {
    matches!(&schema.outcome, OutcomeSpec::Duration { event, .. } if event == name)
}

/// Writes the cohort back out in the layout `load_cohort` reads. Derived
/// columns are omitted; they are recomputed on load.
pub fn write_cohort_csv<W: Write>(
    writer: W,
    cohort: &RawCohort,
    schema: &CohortSchema,
) -> Result<(), CohortError> {
    let mut csv = csv::Writer::from_writer(writer);
    let sources: Vec<_> = schema.source_features().collect();
    let aux_cols = schema.auxiliary_columns();
    let mut header: Vec<&str> = Vec::new();
    if let Some(id) = &schema.id_column {
        header.push(id);
    }
    header.extend(sources.iter().map(|f| f.name.as_str()));
    header.extend(aux_cols.iter().copied());
    csv.write_record(&header)?;

    for row in 0..cohort.n_rows() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        if schema.id_column.is_some() {
            record.push(cohort.row_ids[row].clone());
        }
        for spec in &sources {
            let column = cohort
                .columns
                .get(&spec.name)
                .ok_or_else(|| CohortError::MissingColumn(spec.name.clone()))?;
            record.push(match column {
                ColumnData::Numeric(v) => v[row].map(format_number).unwrap_or_default(),
                ColumnData::Levels(v) => v[row].clone().unwrap_or_default(),
            });
        }
        for name in &aux_cols {
            let values = cohort
                .auxiliary
                .get(*name)
                .ok_or_else(|| CohortError::MissingColumn(name.to_string()))?;
            record.push(values[row].map(format_number).unwrap_or_default());
        }
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::schema::FeatureSpec;

    fn schema() -> CohortSchema {
        CohortSchema::new(
            vec![
                FeatureSpec::continuous("age"),
                FeatureSpec::binary("smoker"),
                FeatureSpec::categorical("pace", ["slow", "steady", "brisk"]),
            ],
            OutcomeSpec::Duration {
                duration: "time".into(),
                event: "event".into(),
            },
        )
    }

    #[test]
    fn empty_cell_becomes_missing() {
        let csv = "age,smoker,pace,time,event\n50,1,slow,3.5,1\n,0,brisk,10,0\n61,NA,steady,2,1\n";
        let raw = load_cohort(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(raw.n_rows(), 3);
        assert_eq!(raw.missing_total(), 2);
        assert_eq!(raw.columns["age"].as_numeric().unwrap()[1], None);
        assert_eq!(raw.auxiliary["time"], vec![Some(3.5), Some(10.0), Some(2.0)]);
    }

    #[test]
    fn exactly_one_missing_cell() {
        let csv = "pace,age,smoker,event,time\nslow,50,1,1,3\nbrisk,,0,0,10\nsteady,61,1,1,2\n";
        let raw = load_cohort(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(raw.missing_total(), 1);
    }

    #[test]
    fn missing_schema_column_is_named() {
        let csv = "age,smoker,time,event\n50,1,3,1\n";
        let err = load_cohort(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(&err, CohortError::MissingColumn(c) if c == "pace"), "{err}");
    }

    #[test]
    fn unknown_column_is_named() {
        let csv = "age,smoker,pace,time,event,bmi\n50,1,slow,3,1,22\n";
        let err = load_cohort(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(&err, CohortError::UnknownColumn(c) if c == "bmi"), "{err}");
    }

    #[test]
    fn bad_cell_reports_location() {
        let csv = "age,smoker,pace,time,event\n50,1,slow,3,1\nold,0,slow,3,0\n";
        let err = load_cohort(csv.as_bytes(), &schema()).unwrap_err();
        match err {
            CohortError::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other}"),
        }
    }
}
