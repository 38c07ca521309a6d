//! Framingham general cardiovascular 10-year risk score, used as a
//! comparison baseline, plus the rules that derive its inputs from a cohort.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{OutcomeColumn, RawCohort, RawValue};
use crate::cox::{fit_cox_values, risk_from_eta, CoxError, CoxFit, CoxOptions};
use crate::metrics::{bootstrap_ci, concordance_index, MetricsError};

/// mg/dL per mmol/L for cholesterol.
pub const MG_DL_PER_MMOL_L: f64 = 38.67;

pub const HORIZON_YEARS: f64 = 10.0;

/// Coefficient names, in design-column order.
pub const COEFFICIENT_NAMES: [&str; 7] = [
    "ln_age",
    "ln_total_cholesterol",
    "ln_hdl_cholesterol",
    "ln_sbp_untreated",
    "ln_sbp_treated",
    "smoker",
    "diabetes",
];

const BUNDLED: &str = include_str!("../data/framingham_general_cvd.json");

#[derive(Debug, Error)]
pub enum FraminghamError {
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("missing sex block: {0}")]
    MissingSexBlock(Sex),
    #[error("missing coefficient '{name}' for {sex}")]
    MissingCoefficient { sex: Sex, name: &'static str },
    #[error("unknown coefficient '{name}' for {sex}")]
    UnknownCoefficient { sex: Sex, name: String },
    #[error("missing baseline survival for {0}")]
    MissingBaselineSurvival(Sex),
    #[error("baseline survival for {sex} must be in (0, 1), got {value}")]
    InvalidBaselineSurvival { sex: Sex, value: f64 },
    #[error("non-finite value for {0}")]
    NonFinite(String),
    #[error("coefficient file: {0}")]
    Parse(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("input lengths differ")]
    Length,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Cox(#[from] CoxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub const BOTH: [Sex; 2] = [Sex::Male, Sex::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" | "women" | "woman" => Ok(Sex::Female),
            "male" | "m" | "men" | "man" => Ok(Sex::Male),
            other => Err(format!("unknown sex '{other}'")),
        }
    }
}

/// Inputs in the units of the published formula: years, mg/dL, mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FraminghamInput {
    pub sex: Sex,
    pub age: f64,
    pub total_cholesterol: f64,
    pub hdl_cholesterol: f64,
    pub sbp: f64,
    pub sbp_treated: bool,
    pub current_smoker: bool,
    pub diabetes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SexCoefficients {
    pub ln_age: f64,
    pub ln_total_cholesterol: f64,
    pub ln_hdl_cholesterol: f64,
    pub ln_sbp_untreated: f64,
    pub ln_sbp_treated: f64,
    pub smoker: f64,
    pub diabetes: f64,
    pub baseline_survival_10y: f64,
    pub mean_linear_predictor: f64,
}

impl SexCoefficients {
    /// Coefficients in [`COEFFICIENT_NAMES`] order.
    pub fn beta(&self) -> [f64; 7] {
        [
            self.ln_age,
            self.ln_total_cholesterol,
            self.ln_hdl_cholesterol,
            self.ln_sbp_untreated,
            self.ln_sbp_treated,
            self.smoker,
            self.diabetes,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CoefficientDocument", try_from = "CoefficientDocument")]
pub struct CoefficientSet {
    pub provenance: String,
    pub female: SexCoefficients,
    pub male: SexCoefficients,
}

#[derive(Serialize, Deserialize)]
struct SexBlock {
    coefficients: IndexMap<String, f64>,
    baseline_survival_10y: Option<f64>,
    mean_linear_predictor: f64,
}

#[derive(Serialize, Deserialize)]
struct CoefficientDocument {
    #[serde(default)]
    provenance: String,
    female: Option<SexBlock>,
    male: Option<SexBlock>,
}

impl From<CoefficientSet> for CoefficientDocument {
    fn from(c: CoefficientSet) -> Self {
        let block = |s: &SexCoefficients| SexBlock {
            coefficients: COEFFICIENT_NAMES.iter().map(|n| n.to_string()).zip(s.beta()).collect(),
            baseline_survival_10y: Some(s.baseline_survival_10y),
            mean_linear_predictor: s.mean_linear_predictor,
        };
        Self {
            provenance: c.provenance,
            female: Some(block(&c.female)),
            male: Some(block(&c.male)),
        }
    }
}

fn parse_block(sex: Sex, block: Option<SexBlock>) -> Result<SexCoefficients, FraminghamError> {
    let block = block.ok_or(FraminghamError::MissingSexBlock(sex))?;
    if let Some(name) = block.coefficients.keys().find(|k| !COEFFICIENT_NAMES.contains(&k.as_str())) {
        return Err(FraminghamError::UnknownCoefficient { sex, name: name.clone() });
    }
    let get = |name: &'static str| -> Result<f64, FraminghamError> {
        let v = *block
            .coefficients
            .get(name)
            .ok_or(FraminghamError::MissingCoefficient { sex, name })?;
        if !v.is_finite() {
            return Err(FraminghamError::NonFinite(format!("{sex} {name}")));
        }
        Ok(v)
    };
    let s0 = block.baseline_survival_10y.ok_or(FraminghamError::MissingBaselineSurvival(sex))?;
    if !(s0 > 0.0 && s0 < 1.0) {
        return Err(FraminghamError::InvalidBaselineSurvival { sex, value: s0 });
    }
    if !block.mean_linear_predictor.is_finite() {
        return Err(FraminghamError::NonFinite(format!("{sex} mean_linear_predictor")));
    }
    Ok(SexCoefficients {
        ln_age: get("ln_age")?,
        ln_total_cholesterol: get("ln_total_cholesterol")?,
        ln_hdl_cholesterol: get("ln_hdl_cholesterol")?,
        ln_sbp_untreated: get("ln_sbp_untreated")?,
        ln_sbp_treated: get("ln_sbp_treated")?,
        smoker: get("smoker")?,
        diabetes: get("diabetes")?,
        baseline_survival_10y: s0,
        mean_linear_predictor: block.mean_linear_predictor,
    })
}

impl TryFrom<CoefficientDocument> for CoefficientSet {
    type Error = FraminghamError;

    fn try_from(doc: CoefficientDocument) -> Result<Self, Self::Error> {
        Ok(Self {
            female: parse_block(Sex::Female, doc.female)?,
            male: parse_block(Sex::Male, doc.male)?,
            provenance: doc.provenance,
        })
    }
}

impl CoefficientSet {
    pub fn for_sex(&self, sex: Sex) -> &SexCoefficients {
        match sex {
            Sex::Female => &self.female,
            Sex::Male => &self.male,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, FraminghamError> {
        let doc: CoefficientDocument = serde_json::from_str(text).map_err(|e| FraminghamError::Parse(e.to_string()))?;
        Self::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficients serialize")
    }

    /// The coefficient file shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled coefficient file is valid")
    }
}

pub fn load_coefficients(path: &Path) -> Result<CoefficientSet, FraminghamError> {
    let text = std::fs::read_to_string(path).map_err(|source| FraminghamError::Io {
        path: path.display().to_string(),
        source,
    })?;
    CoefficientSet::from_json(&text)
}

pub fn mmol_to_mg_dl(mmol_per_l: f64) -> f64 {
    mmol_per_l * MG_DL_PER_MMOL_L
}

fn ln_positive(field: &'static str, value: f64) -> Result<f64, FraminghamError> {
    if value > 0.0 && value.is_finite() {
        Ok(value.ln())
    } else {
        Err(FraminghamError::NonPositive { field, value })
    }
}

/// The seven design values in [`COEFFICIENT_NAMES`] order. Treated and
/// untreated SBP are separate terms; the inactive one is zero.
pub fn design_row(input: &FraminghamInput) -> Result<[f64; 7], FraminghamError> {
    let ln_sbp = ln_positive("sbp", input.sbp)?;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Ok([
        ln_positive("age", input.age)?,
        ln_positive("total_cholesterol", input.total_cholesterol)?,
        ln_positive("hdl_cholesterol", input.hdl_cholesterol)?,
        if input.sbp_treated { 0.0 } else { ln_sbp },
        if input.sbp_treated { ln_sbp } else { 0.0 },
        flag(input.current_smoker),
        flag(input.diabetes),
    ])
}

pub fn linear_predictor(input: &FraminghamInput, coefficients: &CoefficientSet) -> Result<f64, FraminghamError> {
    let row = design_row(input)?;
    let beta = coefficients.for_sex(input.sex).beta();
    Ok(row.iter().zip(beta).map(|(x, b)| x * b).sum())
}

/// `1 - S0(10)^exp(L - mean L)`.
pub fn framingham_risk(input: &FraminghamInput, coefficients: &CoefficientSet) -> Result<f64, FraminghamError> {
    let c = coefficients.for_sex(input.sex);
    let l = linear_predictor(input, coefficients)?;
    let relative = (l - c.mean_linear_predictor).exp();
    // 1 - S0^r computed as -expm1(r ln S0) keeps precision for small risks
    Ok(-(relative * c.baseline_survival_10y.ln()).exp_m1())
}

/// Where a boolean is read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FlagSource {
    /// True when any listed column is set.
    AnyOf { columns: Vec<String> },
    /// True when the column holds one of the listed values.
    ValueIn { column: String, values: Vec<String> },
    /// True when any listed date column (days) is on or before the
    /// assessment date; later diagnoses are ignored.
    DiagnosedBy { columns: Vec<String>, assessment: String },
}

/// Cohort columns feeding each Framingham input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FraminghamFields {
    pub sex: String,
    pub age: String,
    /// Cholesterol columns in mmol/L.
    pub total_cholesterol: String,
    pub hdl_cholesterol: String,
    /// Averaged when more than one reading is listed.
    pub sbp: Vec<String>,
    pub sbp_treated: FlagSource,
    pub current_smoker: FlagSource,
    pub diabetes: FlagSource,
}

impl FraminghamFields {
    /// Column mapping for [`crate::synth::CohortTemplate::cardio_demo`].
    pub fn cardio_demo() -> Self {
        Self {
            sex: "sex".into(),
            age: "age".into(),
            total_cholesterol: "total_cholesterol".into(),
            hdl_cholesterol: "hdl_cholesterol".into(),
            sbp: vec!["sbp".into()],
            sbp_treated: FlagSource::AnyOf {
                columns: vec!["bp_medication".into()],
            },
            current_smoker: FlagSource::ValueIn {
                column: "no_current_smoking".into(),
                values: vec!["0".into()],
            },
            diabetes: FlagSource::AnyOf {
                columns: vec!["diabetes".into()],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub row: usize,
    pub row_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FraminghamCohort {
    pub inputs: Vec<FraminghamInput>,
    /// Source row of each input.
    pub rows: Vec<usize>,
    pub excluded: Vec<ExcludedRow>,
}

fn lookup(raw: &RawCohort, column: &str, row: usize) -> Result<Option<RawValue>, String> {
    if raw.columns.contains_key(column) {
        return Ok(raw.value(column, row));
    }
    match raw.auxiliary.get(column) {
        Some(v) => Ok(v[row].map(RawValue::Number)),
        None => Err(format!("column '{column}' not in cohort")),
    }
}

fn number(raw: &RawCohort, column: &str, row: usize) -> Result<f64, String> {
    match lookup(raw, column, row)? {
        Some(RawValue::Number(x)) if x.is_finite() => Ok(x),
        Some(RawValue::Level(s)) => s.trim().parse().map_err(|_| format!("{column} is not numeric: '{s}'")),
        _ => Err(format!("missing {column}")),
    }
}

fn truthy(column: &str, value: &RawValue) -> Result<bool, String> {
    match value {
        RawValue::Number(x) => Ok(*x != 0.0),
        RawValue::Level(s) => match s.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "y" => Ok(true),
            "0" | "false" | "no" | "n" => Ok(false),
            other => Err(format!("{column} is not a flag: '{other}'")),
        },
    }
}

fn matches_value(value: &RawValue, wanted: &str) -> bool {
    match value {
        RawValue::Level(s) => s == wanted,
        RawValue::Number(x) => wanted.trim().parse::<f64>().is_ok_and(|w| w == *x),
    }
}

fn read_flag(raw: &RawCohort, source: &FlagSource, row: usize) -> Result<bool, String> {
    match source {
        FlagSource::AnyOf { columns } => {
            let mut any = false;
            for c in columns {
                let v = lookup(raw, c, row)?.ok_or_else(|| format!("missing {c}"))?;
                any |= truthy(c, &v)?;
            }
            Ok(any)
        }
        FlagSource::ValueIn { column, values } => {
            let v = lookup(raw, column, row)?.ok_or_else(|| format!("missing {column}"))?;
            Ok(values.iter().any(|w| matches_value(&v, w)))
        }
        FlagSource::DiagnosedBy { columns, assessment } => {
            let at = number(raw, assessment, row)?;
            let mut any = false;
            for c in columns {
                // an empty date means no diagnosis
                if let Some(RawValue::Number(d)) = lookup(raw, c, row)? {
                    any |= d <= at;
                }
            }
            Ok(any)
        }
    }
}

fn derive_row(raw: &RawCohort, fields: &FraminghamFields, row: usize) -> Result<FraminghamInput, String> {
    let sex = match lookup(raw, &fields.sex, row)? {
        Some(RawValue::Level(s)) => s.parse::<Sex>()?,
        Some(RawValue::Number(x)) => return Err(format!("sex must be a level, got {x}")),
        None => return Err(format!("missing {}", fields.sex)),
    };
    if fields.sbp.is_empty() {
        return Err("no blood pressure columns configured".into());
    }
    let readings = fields
        .sbp
        .iter()
        .map(|c| number(raw, c, row))
        .collect::<Result<Vec<_>, _>>()?;
    let input = FraminghamInput {
        sex,
        age: number(raw, &fields.age, row)?,
        total_cholesterol: mmol_to_mg_dl(number(raw, &fields.total_cholesterol, row)?),
        hdl_cholesterol: mmol_to_mg_dl(number(raw, &fields.hdl_cholesterol, row)?),
        sbp: readings.iter().sum::<f64>() / readings.len() as f64,
        sbp_treated: read_flag(raw, &fields.sbp_treated, row)?,
        current_smoker: read_flag(raw, &fields.current_smoker, row)?,
        diabetes: read_flag(raw, &fields.diabetes, row)?,
    };
    design_row(&input).map_err(|e| e.to_string())?;
    Ok(input)
}

/// Derives formula inputs for every row; rows with a missing or invalid
/// required value are excluded with a reason.
pub fn derive_framingham_inputs(raw: &RawCohort, fields: &FraminghamFields) -> FraminghamCohort {
    let mut out = FraminghamCohort {
        inputs: Vec::new(),
        rows: Vec::new(),
        excluded: Vec::new(),
    };
    for row in 0..raw.n_rows() {
        match derive_row(raw, fields, row) {
            Ok(input) => {
                out.inputs.push(input);
                out.rows.push(row);
            }
            Err(reason) => out.excluded.push(ExcludedRow {
                row,
                row_id: raw.row_ids[row].clone(),
                reason,
            }),
        }
    }
    if !out.excluded.is_empty() {
        log::info!("framingham: {} of {} rows excluded", out.excluded.len(), raw.n_rows());
    }
    out
}

pub fn design_matrix(inputs: &[FraminghamInput]) -> Result<Array2<f64>, FraminghamError> {
    let mut x = Array2::zeros((inputs.len(), COEFFICIENT_NAMES.len()));
    for (i, input) in inputs.iter().enumerate() {
        for (j, v) in design_row(input)?.into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Ok(x)
}

/// Cox model on the seven Framingham terms, fit to one sex.
pub fn refit_cox(inputs: &[FraminghamInput], outcome: &OutcomeColumn, options: CoxOptions) -> Result<CoxFit, FraminghamError> {
    if inputs.len() != outcome.len() {
        return Err(FraminghamError::Length);
    }
    let x = design_matrix(inputs)?;
    let names: Vec<String> = COEFFICIENT_NAMES.iter().map(|s| s.to_string()).collect();
    Ok(fit_cox_values(x.view(), &names, outcome, options)?)
}

/// Cox refits on the Framingham terms, one per sex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitModels {
    pub female: CoxFit,
    pub male: CoxFit,
}

impl RefitModels {
    pub fn fit(inputs: &[FraminghamInput], outcome: &OutcomeColumn, options: CoxOptions) -> Result<Self, FraminghamError> {
        if inputs.len() != outcome.len() {
            return Err(FraminghamError::Length);
        }
        let fit_sex = |sex: Sex| {
            let rows: Vec<usize> = (0..inputs.len()).filter(|&i| inputs[i].sex == sex).collect();
            let subset: Vec<FraminghamInput> = rows.iter().map(|&i| inputs[i]).collect();
            refit_cox(&subset, &outcome.select(&rows), options)
        };
        Ok(Self {
            female: fit_sex(Sex::Female)?,
            male: fit_sex(Sex::Male)?,
        })
    }

    /// Predicted risk at `horizon` from the sex-specific model.
    pub fn risks(&self, inputs: &[FraminghamInput], horizon: f64) -> Result<Vec<f64>, FraminghamError> {
        inputs
            .iter()
            .map(|input| {
                let fit = match input.sex {
                    Sex::Female => &self.female,
                    Sex::Male => &self.male,
                };
                let eta = fit.linear_predictor(&design_row(input)?);
                Ok(risk_from_eta(&fit.baseline_cumhaz, eta, horizon).risk)
            })
            .collect()
    }
}

/// Risks from one scoring method, aligned with the comparison rows.
#[derive(Debug, Clone, Copy)]
pub struct ScoreColumn<'a> {
    pub score: &'a str,
    pub method: &'a str,
    pub risks: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Bootstrap rounds for the intervals; 0 skips them.
    pub rounds: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            rounds: 0,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIndexCell {
    pub c_index: f64,
    pub ci: Option<(f64, f64)>,
    pub n: usize,
}

impl fmt::Display for CIndexCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.c_index)?;
        if let Some((lo, hi)) = self.ci {
            write!(f, " [{lo:.3} – {hi:.3}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub score: String,
    pub method: String,
    pub men: Option<CIndexCell>,
    pub women: Option<CIndexCell>,
    /// Both sexes, risks concatenated.
    pub all: Option<CIndexCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    /// Tab-separated table: score, method, men, women, all participants.
    pub fn to_table(&self) -> String {
        let cell = |c: &Option<CIndexCell>| c.map_or_else(|| "n/a".to_string(), |c| c.to_string());
        let mut out = String::from("Score\tMethod\tMen\tWomen\tAll participants\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.score,
                r.method,
                cell(&r.men),
                cell(&r.women),
                cell(&r.all)
            ));
        }
        out
    }
}

fn cell(risks: &[f64], durations: &[f64], events: &[bool], rows: &[usize], options: &CompareOptions) -> Result<Option<CIndexCell>, FraminghamError> {
    let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let r = pick(risks, rows);
    let d = pick(durations, rows);
    let e: Vec<bool> = rows.iter().map(|&i| events[i]).collect();
    let c = match concordance_index(&r, &d, &e) {
        Ok(c) => c,
        Err(MetricsError::NoComparablePairs | MetricsError::Empty) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let ci = if options.rounds > 0 {
        let b = bootstrap_ci(
            rows.len(),
            |idx: &[usize]| {
                let rr: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
                let dd: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
                let ee: Vec<bool> = idx.iter().map(|&i| e[i]).collect();
                concordance_index(&rr, &dd, &ee)
            },
            options.rounds,
            options.level,
            options.seed,
        )?;
        Some((b.low, b.high))
    } else {
        None
    };
    Ok(Some(CIndexCell {
        c_index: c,
        ci,
        n: rows.len(),
    }))
}

/// C-index of each score for men, women and everyone.
pub fn compare_scores(
    columns: &[ScoreColumn<'_>],
    sexes: &[Sex],
    durations: &[f64],
    events: &[bool],
    options: &CompareOptions,
) -> Result<ComparisonReport, FraminghamError> {
    let n = sexes.len();
    if durations.len() != n || events.len() != n || columns.iter().any(|c| c.risks.len() != n) {
        return Err(FraminghamError::Length);
    }
    let men: Vec<usize> = (0..n).filter(|&i| sexes[i] == Sex::Male).collect();
    let women: Vec<usize> = (0..n).filter(|&i| sexes[i] == Sex::Female).collect();
    let all: Vec<usize> = (0..n).collect();
    let rows = columns
        .iter()
        .map(|c| {
            Ok(ComparisonRow {
                score: c.score.into(),
                method: c.method.into(),
                men: cell(c.risks, durations, events, &men, options)?,
                women: cell(c.risks, durations, events, &women, options)?,
                all: cell(c.risks, durations, events, &all, options)?,
            })
        })
        .collect::<Result<Vec<_>, FraminghamError>>()?;
    Ok(ComparisonReport { rows })
}
