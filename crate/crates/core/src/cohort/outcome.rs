use serde::{Deserialize, Serialize};

use super::raw::RawCohort;
use super::schema::{CohortSchema, OutcomeSpec};
use super::CohortError;

pub const DAYS_PER_YEAR: f64 = 365.25;

/// Follow-up in years and event indicator per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeColumn {
    pub duration: Vec<f64>,
    pub event: Vec<bool>,
}

impl OutcomeColumn {
    pub fn new(duration: Vec<f64>, event: Vec<bool>) -> Result<Self, CohortError> {
        if duration.len() != event.len() {
            return Err(CohortError::Outcome(format!(
                "{} durations but {} event flags",
                duration.len(),
                event.len()
            )));
        }
        if let Some(i) = duration.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(CohortError::Outcome(format!(
                "duration of subject {} is {} (must be finite and > 0)",
                i + 1,
                duration[i]
            )));
        }
        Ok(Self { duration, event })
    }

    pub fn len(&self) -> usize {
        self.duration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.duration.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            duration: rows.iter().map(|&r| self.duration[r]).collect(),
            event: rows.iter().map(|&r| self.event[r]).collect(),
        }
    }
}

/// Outcome for the retained subjects plus which input rows were kept.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltOutcome {
    pub outcome: OutcomeColumn,
    pub included: Vec<usize>,
    /// Subjects with a qualifying diagnosis on or before assessment.
    pub excluded: Vec<usize>,
}

/// Builds follow-up from dates (days since epoch).
///
/// Follow-up ends at the earliest of: first event after assessment, death,
/// administrative censoring. Any event dated on or before assessment marks
/// the subject as pre-existing disease and excludes them.
pub fn build_outcome(
    event_dates: &[Vec<Option<i64>>],
    assessment: &[i64],
    admin_censor: i64,
    death: Option<&[Option<i64>]>,
) -> Result<BuiltOutcome, CohortError> {
    let n = assessment.len();
    if event_dates.len() != n || death.is_some_and(|d| d.len() != n) {
        return Err(CohortError::Outcome("date columns differ in length".into()));
    }
    let mut duration = Vec::new();
    let mut event = Vec::new();
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for i in 0..n {
        let start = assessment[i];
        if admin_censor <= start {
            return Err(CohortError::Outcome(format!(
                "subject {}: administrative censor date precedes assessment",
                i + 1
            )));
        }
        if event_dates[i].iter().flatten().any(|&d| d <= start) {
            excluded.push(i);
            continue;
        }
        let death_day = death.and_then(|d| d[i]);
        if let Some(dd) = death_day {
            if dd <= start {
                return Err(CohortError::Outcome(format!(
                    "subject {}: death date not after assessment",
                    i + 1
                )));
            }
        }
        let first_event = event_dates[i].iter().flatten().copied().min();
        let mut end = admin_censor;
        let mut observed = false;
        if let Some(dd) = death_day {
            end = end.min(dd);
        }
        if let Some(e) = first_event {
            // an event on the censoring day still counts
            if e <= end {
                end = e;
                observed = true;
            }
        }
        duration.push((end - start) as f64 / DAYS_PER_YEAR);
        event.push(observed);
        included.push(i);
    }
    Ok(BuiltOutcome {
        outcome: OutcomeColumn::new(duration, event)?,
        included,
        excluded,
    })
}

/// Reads the outcome of a loaded cohort per its schema, applying
/// prior-diagnosis exclusion rules.
pub fn outcome_from_cohort(raw: &RawCohort, schema: &CohortSchema) -> Result<BuiltOutcome, CohortError> {
    let aux = |name: &str| {
        raw.auxiliary
            .get(name)
            .ok_or_else(|| CohortError::MissingColumn(name.to_string()))
    };
    let n = raw.n_rows();
    match &schema.outcome {
        OutcomeSpec::Duration { duration, event } => {
            let d = aux(duration)?;
            let e = aux(event)?;
            let mut dur = Vec::with_capacity(n);
            let mut ev = Vec::with_capacity(n);
            for i in 0..n {
                let (Some(di), Some(ei)) = (d[i], e[i]) else {
                    return Err(CohortError::MissingValue {
                        column: if d[i].is_none() { duration.clone() } else { event.clone() },
                        row: i + 1,
                    });
                };
                dur.push(di);
                ev.push(ei != 0.0);
            }
            let mut included = Vec::new();
            let mut excluded = Vec::new();
            for i in 0..n {
                // Without an assessment date, any recorded prior diagnosis excludes.
                let prior = schema
                    .exclusion_rules
                    .iter()
                    .any(|r| raw.auxiliary.get(&r.column).is_some_and(|c| c[i].is_some()));
                if prior {
                    excluded.push(i);
                } else {
                    included.push(i);
                }
            }
            let outcome = OutcomeColumn::new(dur, ev)?.select(&included);
            Ok(BuiltOutcome {
                outcome,
                included,
                excluded,
            })
        }
        OutcomeSpec::Dates {
            event_dates,
            assessment_date,
            admin_censor_date,
            death_date,
        } => {
            let assess_col = aux(assessment_date)?;
            let mut assessment = Vec::with_capacity(n);
            for (i, a) in assess_col.iter().enumerate() {
                assessment.push(a.ok_or_else(|| CohortError::MissingValue {
                    column: assessment_date.clone(),
                    row: i + 1,
                })? as i64);
            }
            let event_cols: Vec<&Vec<Option<f64>>> =
                event_dates.iter().map(|c| aux(c)).collect::<Result<_, _>>()?;
            let rule_cols: Vec<&Vec<Option<f64>>> = schema
                .exclusion_rules
                .iter()
                .map(|r| aux(&r.column))
                .collect::<Result<_, _>>()?;
            let events: Vec<Vec<Option<i64>>> = (0..n)
                .map(|i| event_cols.iter().map(|c| c[i].map(|d| d as i64)).collect())
                .collect();
            let death: Option<Vec<Option<i64>>> = match death_date {
                Some(col) => Some(aux(col)?.iter().map(|d| d.map(|x| x as i64)).collect()),
                None => None,
            };
            let built = build_outcome(&events, &assessment, admin_censor_date.0, death.as_deref())?;
            // prior-diagnosis rules on top of pre-existing outcome events
            let mut included = Vec::new();
            let mut keep = Vec::new();
            let mut excluded = built.excluded.clone();
            for (k, &i) in built.included.iter().enumerate() {
                let prior = rule_cols
                    .iter()
                    .any(|c| c[i].is_some_and(|d| (d as i64) <= assessment[i]));
                if prior {
                    excluded.push(i);
                } else {
                    included.push(i);
                    keep.push(k);
                }
            }
            excluded.sort_unstable();
            Ok(BuiltOutcome {
                outcome: built.outcome.select(&keep),
                included,
                excluded,
            })
        }
    }
}
