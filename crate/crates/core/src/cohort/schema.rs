use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::CohortError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
    Categorical,
    Ordinal,
    Derived,
}

impl FeatureKind {
    /// Kinds stored as numbers in a raw cohort.
    pub fn is_numeric(self) -> bool {
        matches!(self, Self::Continuous | Self::Binary | Self::Derived)
    }

    /// Kinds expanded to one indicator column per level.
    pub fn is_leveled(self) -> bool {
        matches!(self, Self::Categorical | Self::Ordinal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    /// First input divided by the second.
    Ratio,
    /// Sum of all inputs.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<Derivation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Free-form tags. `cholesterol`, `blood_pressure`, `heart_rate` and `sex`
    /// drive model variants and sex-specific scopes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    /// Whether a person can change this factor through lifestyle.
    #[serde(default)]
    pub modifiable: bool,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Continuous)
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Binary)
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        let mut spec = Self::new(name, FeatureKind::Categorical);
        spec.categories = Some(levels.into_iter().map(Into::into).collect());
        spec
    }

    pub fn ordinal<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        let mut spec = Self::new(name, FeatureKind::Ordinal);
        spec.categories = Some(levels.into_iter().map(Into::into).collect());
        spec
    }

    pub fn derived<S: Into<String>>(
        name: impl Into<String>,
        derivation: Derivation,
        inputs: impl IntoIterator<Item = S>,
    ) -> Self {
        let mut spec = Self::new(name, FeatureKind::Derived);
        spec.derivation = Some(derivation);
        spec.inputs = inputs.into_iter().map(Into::into).collect();
        spec
    }

    fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
            categories: None,
            derivation: None,
            inputs: Vec::new(),
            unit: String::new(),
            label: None,
            tags: Vec::new(),
            modifiable: false,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.push(tag.into());
        self
    }

    pub fn modifiable(mut self) -> Self {
        self.modifiable = true;
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn levels(&self) -> &[String] {
        self.categories.as_deref().unwrap_or(&[])
    }
}

/// A calendar day, stored as days since 1970-01-01. Accepts either an
/// integer or an ISO `YYYY-MM-DD` string when deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "DayRepr", into = "i64")]
pub struct Day(pub i64);

#[derive(Deserialize)]
#[serde(untagged)]
enum DayRepr {
    Days(i64),
    Iso(String),
}

impl TryFrom<DayRepr> for Day {
    type Error = String;

    fn try_from(value: DayRepr) -> Result<Self, Self::Error> {
        match value {
            DayRepr::Days(d) => Ok(Day(d)),
            DayRepr::Iso(s) => parse_day(&s).ok_or_else(|| format!("invalid date '{s}'")),
        }
    }
}

impl From<Day> for i64 {
    fn from(day: Day) -> Self {
        day.0
    }
}

/// Parses an integer day count or an ISO date.
pub fn parse_day(text: &str) -> Option<Day> {
    let text = text.trim();
    if let Ok(d) = text.parse::<i64>() {
        return Some(Day(d));
    }
    let date = chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()?;
    let epoch = chrono::NaiveDate::from_ymd_opt(1970, 1, 1)?;
    Some(Day((date - epoch).num_days()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutcomeSpec {
    /// Follow-up already expressed as years plus an event flag.
    Duration { duration: String, event: String },
    /// Follow-up derived from calendar dates.
    Dates {
        event_dates: Vec<String>,
        assessment_date: String,
        admin_censor_date: Day,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        death_date: Option<String>,
    },
}

impl OutcomeSpec {
    pub fn columns(&self) -> Vec<&str> {
        match self {
            Self::Duration { duration, event } => vec![duration, event],
            Self::Dates {
                event_dates,
                assessment_date,
                death_date,
                ..
            } => {
                let mut cols: Vec<&str> = event_dates.iter().map(String::as_str).collect();
                cols.push(assessment_date);
                if let Some(d) = death_date {
                    cols.push(d);
                }
                cols
            }
        }
    }
}

/// A prior-diagnosis date column: subjects diagnosed on or before their
/// assessment date are excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRule {
    pub column: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSchema {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    pub features: Vec<FeatureSpec>,
    pub outcome: OutcomeSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusion_rules: Vec<ExclusionRule>,
}

impl CohortSchema {
    pub fn new(features: Vec<FeatureSpec>, outcome: OutcomeSpec) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id_column: None,
            features,
            outcome,
            exclusion_rules: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CohortError> {
        let schema: Self =
            serde_json::from_str(text).map_err(|e| CohortError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Features read from CSV (everything except derived ones).
    pub fn source_features(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.features
            .iter()
            .filter(|f| f.kind != FeatureKind::Derived)
    }

    /// Extra numeric (date) columns read alongside the outcome.
    pub fn auxiliary_columns(&self) -> Vec<&str> {
        let mut cols = self.outcome.columns();
        for rule in &self.exclusion_rules {
            if !cols.contains(&rule.column.as_str()) {
                cols.push(&rule.column);
            }
        }
        cols
    }

    /// Tags of a feature plus, for derived features, the tags of its inputs.
    pub fn effective_tags(&self, name: &str) -> Vec<String> {
        let mut tags = Vec::new();
        if let Some(spec) = self.feature(name) {
            tags.extend(spec.tags.iter().cloned());
            for input in &spec.inputs {
                if let Some(inner) = self.feature(input) {
                    tags.extend(inner.tags.iter().cloned());
                }
            }
        }
        tags.sort();
        tags.dedup();
        tags
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CohortError::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.trim().is_empty() {
                return Err(CohortError::Schema("feature with empty name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(CohortError::Schema(format!("duplicate feature '{}'", f.name)));
            }
        }
        for f in &self.features {
            if f.kind.is_leveled() {
                let levels = f.levels();
                if levels.len() < 2 {
                    return Err(CohortError::Schema(format!(
                        "feature '{}' needs at least 2 categories",
                        f.name
                    )));
                }
                let unique: HashSet<&String> = levels.iter().collect();
                if unique.len() != levels.len() {
                    return Err(CohortError::Schema(format!(
                        "feature '{}' repeats a category",
                        f.name
                    )));
                }
            }
            if f.kind == FeatureKind::Derived {
                let derivation = f.derivation.ok_or_else(|| {
                    CohortError::Schema(format!("derived feature '{}' has no derivation", f.name))
                })?;
                let arity_ok = match derivation {
                    Derivation::Ratio => f.inputs.len() == 2,
                    Derivation::Sum => !f.inputs.is_empty(),
                };
                if !arity_ok {
                    return Err(CohortError::Schema(format!(
                        "derived feature '{}' has the wrong number of inputs",
                        f.name
                    )));
                }
                for input in &f.inputs {
                    match self.feature(input) {
                        Some(spec)
                            if matches!(spec.kind, FeatureKind::Continuous | FeatureKind::Binary) => {}
                        Some(_) => {
                            return Err(CohortError::Schema(format!(
                                "derived feature '{}' input '{input}' must be continuous or binary",
                                f.name
                            )))
                        }
                        None => {
                            return Err(CohortError::Schema(format!(
                                "derived feature '{}' references unknown input '{input}'",
                                f.name
                            )))
                        }
                    }
                }
            }
        }
        let mut reserved: Vec<&str> = self.auxiliary_columns();
        if let Some(id) = &self.id_column {
            reserved.push(id);
        }
        for col in reserved {
            if seen.contains(col) {
                return Err(CohortError::Schema(format!(
                    "column '{col}' is both a feature and an outcome/id column"
                )));
            }
        }
        if let OutcomeSpec::Dates { event_dates, .. } = &self.outcome {
            if event_dates.is_empty() {
                return Err(CohortError::Schema("dates outcome needs an event date column".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome() -> OutcomeSpec {
        OutcomeSpec::Duration {
            duration: "time".into(),
            event: "event".into(),
        }
    }

    #[test]
    fn rejects_duplicates_and_dangling_inputs() {
        let dup = CohortSchema::new(
            vec![FeatureSpec::continuous("a"), FeatureSpec::continuous("a")],
            outcome(),
        );
        assert!(dup.validate().is_err());
        let dangling = CohortSchema::new(
            vec![FeatureSpec::derived("r", Derivation::Ratio, ["a", "b"]), FeatureSpec::continuous("a")],
            outcome(),
        );
        let err = dangling.validate().unwrap_err().to_string();
        assert!(err.contains("'b'"), "{err}");
    }

    #[test]
    fn categorical_needs_two_levels() {
        let s = CohortSchema::new(vec![FeatureSpec::categorical("c", ["only"])], outcome());
        assert!(s.validate().is_err());
    }

    #[test]
    fn day_accepts_iso_and_integers() {
        assert_eq!(parse_day("1970-01-11"), Some(Day(10)));
        assert_eq!(parse_day("42"), Some(Day(42)));
        let d: Day = serde_json::from_str("\"2020-09-30\"").unwrap();
        assert_eq!(d, parse_day("2020-09-30").unwrap());
        assert!(parse_day("not a date").is_none());
    }

    #[test]
    fn derived_tags_inherit_from_inputs() {
        let s = CohortSchema::new(
            vec![
                FeatureSpec::continuous("tc").with_tag("cholesterol"),
                FeatureSpec::continuous("hdl").with_tag("cholesterol"),
                FeatureSpec::derived("ratio", Derivation::Ratio, ["tc", "hdl"]),
            ],
            outcome(),
        );
        s.validate().unwrap();
        assert_eq!(s.effective_tags("ratio"), vec!["cholesterol".to_string()]);
    }
}
