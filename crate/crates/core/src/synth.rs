//! Synthetic survival cohorts with known proportional-hazards ground truth.
//!
//! [`generate`] draws a numeric design and event times by inverse-transform
//! sampling; [`generate_cohort_like`] produces a mixed-type raw cohort
//! (continuous, binary, categorical, derived, with missingness and
//! date-based outcomes) that exercises the whole preprocessing path.

use indexmap::IndexMap;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{
    one_hot_name, CohortSchema, ColumnData, Day, Derivation, DesignMatrix, ExclusionRule, FeatureSpec, OutcomeColumn,
    OutcomeSpec, RawCohort, DAYS_PER_YEAR,
};
use crate::linalg::cholesky_lower;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateModel {
    IndependentNormal,
    /// Standard normal margins with the given correlation matrix.
    Correlated { correlation: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Baseline {
    /// Constant hazard `rate` per year.
    Exponential { rate: f64 },
    /// Cumulative hazard `(t / scale)^shape`.
    Weibull { shape: f64, scale: f64 },
}

impl Baseline {
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => rate * t,
            Self::Weibull { shape, scale } => (t / scale).powf(shape),
        }
    }

    /// Time at which the cumulative hazard reaches `h`.
    pub fn inverse_cumulative_hazard(&self, h: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => h / rate,
            Self::Weibull { shape, scale } => scale * h.powf(1.0 / shape),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Censoring {
    None,
    /// Independent exponential dropout.
    Exponential { rate: f64 },
    /// Fixed administrative end of follow-up.
    Administrative { time: f64 },
    /// Whichever of dropout and administrative censoring comes first.
    Combined { rate: f64, time: f64 },
}

pub const DEFAULT_ADMIN_CENSOR_YEARS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub beta: Vec<f64>,
    pub covariates: CovariateModel,
    pub baseline: Baseline,
    pub censoring: Censoring,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Independent standard-normal covariates, exponential baseline,
    /// administrative censoring at 10 years.
    pub fn exponential(n: usize, beta: Vec<f64>, rate: f64, seed: u64) -> Self {
        Self {
            n,
            beta,
            covariates: CovariateModel::IndependentNormal,
            baseline: Baseline::Exponential { rate },
            censoring: Censoring::Administrative {
                time: DEFAULT_ADMIN_CENSOR_YEARS,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return bad("beta must be finite");
        }
        match self.baseline {
            Baseline::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => return bad("rate must be > 0"),
            Baseline::Weibull { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                return bad("Weibull shape and scale must be > 0")
            }
            _ => {}
        }
        match self.censoring {
            Censoring::Exponential { rate } | Censoring::Combined { rate, .. } if !(rate > 0.0) => {
                return bad("censoring rate must be > 0")
            }
            Censoring::Administrative { time } | Censoring::Combined { time, .. } if !(time > 0.0) => {
                return bad("administrative censoring time must be > 0")
            }
            _ => {}
        }
        if let CovariateModel::Correlated { correlation } = &self.covariates {
            let p = self.beta.len();
            if correlation.len() != p || correlation.iter().any(|r| r.len() != p) {
                return bad("correlation matrix must be p x p");
            }
        }
        Ok(())
    }
}

/// What the generator knows that a fit has to recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    pub column_names: Vec<String>,
    pub baseline: Baseline,
    pub censoring: Censoring,
    pub event_fraction: f64,
    /// True linear predictor per subject.
    pub linear_predictor: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub design: DesignMatrix,
    pub outcome: OutcomeColumn,
    pub truth: GroundTruth,
}

impl SyntheticCohort {
    /// Exact event probability by `horizon` under the true model.
    pub fn true_risk(&self, horizon: f64) -> Vec<f64> {
        let h0 = self.truth.baseline.cumulative_hazard(horizon);
        self.truth
            .linear_predictor
            .iter()
            .map(|eta| -(-(h0 * eta.exp())).exp_m1())
            .collect()
    }

    /// The cohort as a CSV-ready raw table with a duration/event schema.
    pub fn to_raw(&self) -> (RawCohort, CohortSchema) {
        let features = self
            .design
            .column_names
            .iter()
            .map(|n| FeatureSpec::continuous(n.clone()))
            .collect();
        let schema = CohortSchema::new(
            features,
            OutcomeSpec::Duration {
                duration: "duration".into(),
                event: "event".into(),
            },
        );
        let columns = self
            .design
            .column_names
            .iter()
            .enumerate()
            .map(|(j, n)| {
                let values = self.design.values.column(j).iter().map(|&x| Some(x)).collect();
                (n.clone(), ColumnData::Numeric(values))
            })
            .collect();
        let mut auxiliary = IndexMap::new();
        auxiliary.insert(
            "duration".to_string(),
            self.outcome.duration.iter().map(|&d| Some(d)).collect(),
        );
        auxiliary.insert(
            "event".to_string(),
            self.outcome.event.iter().map(|&e| Some(if e { 1.0 } else { 0.0 })).collect(),
        );
        let raw = RawCohort {
            row_ids: (1..=self.outcome.len()).map(|i| i.to_string()).collect(),
            columns,
            auxiliary,
        };
        (raw, schema)
    }
}

fn draw_event_time(baseline: &Baseline, eta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let e: f64 = Exp1.sample(rng);
    baseline.inverse_cumulative_hazard(e / eta.exp())
}

fn draw_censor_time(censoring: &Censoring, rng: &mut ChaCha8Rng) -> f64 {
    match *censoring {
        Censoring::None => f64::INFINITY,
        Censoring::Exponential { rate } => {
            let e: f64 = Exp1.sample(rng);
            e / rate
        }
        Censoring::Administrative { time } => time,
        Censoring::Combined { rate, time } => {
            let e: f64 = Exp1.sample(rng);
            (e / rate).min(time)
        }
    }
}

/// Draws a cohort. Identical specs give identical cohorts.
pub fn generate(spec: &GeneratorSpec) -> Result<SyntheticCohort, SynthError> {
    spec.validate()?;
    let p = spec.beta.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mixing = match &spec.covariates {
        CovariateModel::IndependentNormal => None,
        CovariateModel::Correlated { correlation } => {
            let m = Array2::from_shape_fn((p, p), |(i, j)| correlation[i][j]);
            Some(cholesky_lower(&m).map_err(|_| {
                SynthError::InvalidSpec("correlation matrix is not positive definite".into())
            })?)
        }
    };
    let mut values = Array2::<f64>::zeros((spec.n, p));
    let mut eta = Vec::with_capacity(spec.n);
    let mut duration = Vec::with_capacity(spec.n);
    let mut event = Vec::with_capacity(spec.n);
    let mut z = vec![0.0; p];
    for i in 0..spec.n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        for j in 0..p {
            values[[i, j]] = match &mixing {
                None => z[j],
                Some(l) => (0..=j).map(|k| l[[j, k]] * z[k]).sum(),
            };
        }
        let lp: f64 = (0..p).map(|j| values[[i, j]] * spec.beta[j]).sum();
        let t = draw_event_time(&spec.baseline, lp, &mut rng);
        let c = draw_censor_time(&spec.censoring, &mut rng);
        duration.push(t.min(c));
        event.push(t <= c);
        eta.push(lp);
    }
    let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let outcome = OutcomeColumn::new(duration, event)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let event_fraction = outcome.n_events() as f64 / spec.n as f64;
    Ok(SyntheticCohort {
        design: DesignMatrix::from_values(values, names.clone()),
        outcome,
        truth: GroundTruth {
            beta: spec.beta.clone(),
            column_names: names,
            baseline: spec.baseline,
            censoring: spec.censoring,
            event_fraction,
            linear_predictor: eta,
        },
    })
}

// ---------------------------------------------------------------------------
// Mixed-type cohorts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTemplate {
    pub name: String,
    pub probability: f64,
    /// Log hazard ratio of this level's indicator.
    #[serde(default)]
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TemplateKind {
    /// Normal values, optionally clipped below at `min`. `effect` is the log
    /// hazard ratio per standard deviation.
    Continuous {
        mean: f64,
        sd: f64,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        effect: f64,
    },
    Binary {
        prevalence: f64,
        #[serde(default)]
        effect: f64,
    },
    Categorical {
        levels: Vec<LevelTemplate>,
        #[serde(default)]
        ordinal: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateFeature {
    pub name: String,
    pub kind: TemplateKind,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub unit: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub modifiable: bool,
}

/// A derived column with an effect on `(value - center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedTemplate {
    pub name: String,
    pub derivation: Derivation,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub effect: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub modifiable: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTemplate {
    /// Baseline hazard per year at the reference profile.
    pub baseline_rate: f64,
    /// Administrative censoring, in years after the latest assessment date.
    pub follow_up_years: f64,
    /// Competing death hazard per year (censors).
    pub death_rate: f64,
    /// Share of subjects with a qualifying event before assessment.
    pub prior_event_rate: f64,
    pub event_columns: Vec<String>,
    /// Earliest and latest assessment dates.
    pub assessment_window: (Day, Day),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTemplate {
    pub n: usize,
    pub seed: u64,
    pub features: Vec<TemplateFeature>,
    #[serde(default)]
    pub derived: Vec<DerivedTemplate>,
    pub outcome: OutcomeTemplate,
}

/// Ground truth of a mixed-type cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateTruth {
    /// Effects by encoded column name. Continuous effects are per template
    /// standard deviation (approximately per encoded unit).
    pub effects: IndexMap<String, f64>,
    pub baseline_rate: f64,
    pub linear_predictor: Vec<f64>,
    pub n_prior_events: usize,
    pub event_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TemplateCohort {
    pub raw: RawCohort,
    pub schema: CohortSchema,
    pub truth: TemplateTruth,
}

const EVENT_DATE_SUFFIX: &str = "_date";

impl CohortTemplate {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        for f in &self.features {
            if !(0.0..1.0).contains(&f.missing_rate) {
                return bad(format!("missing_rate of '{}' must be in [0, 1)", f.name));
            }
            match &f.kind {
                TemplateKind::Continuous { sd, .. } if !(*sd > 0.0) => {
                    return bad(format!("sd of '{}' must be > 0", f.name))
                }
                TemplateKind::Binary { prevalence, .. } if !(0.0..=1.0).contains(prevalence) => {
                    return bad(format!("prevalence of '{}' must be in [0, 1]", f.name))
                }
                TemplateKind::Categorical { levels, .. } => {
                    let total: f64 = levels.iter().map(|l| l.probability).sum();
                    if levels.len() < 2 || (total - 1.0).abs() > 1e-9 || levels.iter().any(|l| l.probability < 0.0) {
                        return bad(format!("levels of '{}' must be >= 2 with probabilities summing to 1", f.name));
                    }
                }
                _ => {}
            }
        }
        if !(self.outcome.baseline_rate > 0.0) {
            return bad("baseline_rate must be > 0".into());
        }
        if self.outcome.event_columns.is_empty() {
            return bad("at least one event column is required".into());
        }
        if self.outcome.assessment_window.1 < self.outcome.assessment_window.0 {
            return bad("assessment window is reversed".into());
        }
        Ok(())
    }

    /// The schema this template's cohorts load under.
    pub fn schema(&self) -> CohortSchema {
        let mut features = Vec::new();
        for f in &self.features {
            let mut spec = match &f.kind {
                TemplateKind::Continuous { .. } => FeatureSpec::continuous(f.name.clone()),
                TemplateKind::Binary { .. } => FeatureSpec::binary(f.name.clone()),
                TemplateKind::Categorical { levels, ordinal } => {
                    let names = levels.iter().map(|l| l.name.clone());
                    if *ordinal {
                        FeatureSpec::ordinal(f.name.clone(), names)
                    } else {
                        FeatureSpec::categorical(f.name.clone(), names)
                    }
                }
            };
            spec.unit = f.unit.clone();
            spec.label = f.label.clone();
            spec.tags = f.tags.clone();
            spec.modifiable = f.modifiable;
            features.push(spec);
        }
        for d in &self.derived {
            let mut spec = FeatureSpec::derived(d.name.clone(), d.derivation, d.inputs.clone());
            spec.label = d.label.clone();
            spec.tags = d.tags.clone();
            spec.modifiable = d.modifiable;
            features.push(spec);
        }
        let o = &self.outcome;
        let mut schema = CohortSchema::new(
            features,
            OutcomeSpec::Dates {
                event_dates: o
                    .event_columns
                    .iter()
                    .map(|c| format!("{c}{EVENT_DATE_SUFFIX}"))
                    .collect(),
                assessment_date: "assessment_date".into(),
                admin_censor_date: self.admin_censor_date(),
                death_date: Some("death_date".into()),
            },
        );
        schema.id_column = Some("eid".into());
        schema.exclusion_rules = Vec::<ExclusionRule>::new();
        schema
    }

    fn admin_censor_date(&self) -> Day {
        let o = &self.outcome;
        Day(o.assessment_window.1 .0 + (o.follow_up_years * DAYS_PER_YEAR).round() as i64)
    }
}

fn derive_value(derivation: Derivation, xs: &[f64]) -> Option<f64> {
    match derivation {
        Derivation::Ratio => (xs[1] != 0.0).then(|| xs[0] / xs[1]),
        Derivation::Sum => Some(xs.iter().sum()),
    }
}

/// Draws a mixed-type cohort from a template. Values are drawn complete,
/// the true linear predictor is computed, and only then are cells blanked
/// completely at random at each feature's missing rate.
pub fn generate_cohort_like(template: &CohortTemplate) -> Result<TemplateCohort, SynthError> {
    template.validate()?;
    let schema = template.schema();
    schema
        .validate()
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let n = template.n;
    let mut rng = ChaCha8Rng::seed_from_u64(template.seed);
    let mut effects: IndexMap<String, f64> = IndexMap::new();
    let mut eta = vec![0.0; n];
    let mut numeric: IndexMap<String, Vec<f64>> = IndexMap::new();
    let mut columns: IndexMap<String, ColumnData> = IndexMap::new();

    for f in &template.features {
        match &f.kind {
            TemplateKind::Continuous { mean, sd, min, effect } => {
                let values: Vec<f64> = (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        let x = mean + sd * z;
                        min.map_or(x, |m| x.max(m))
                    })
                    .collect();
                for (e, x) in eta.iter_mut().zip(&values) {
                    *e += effect * (x - mean) / sd;
                }
                effects.insert(f.name.clone(), *effect);
                numeric.insert(f.name.clone(), values.clone());
                columns.insert(f.name.clone(), ColumnData::Numeric(values.into_iter().map(Some).collect()));
            }
            TemplateKind::Binary { prevalence, effect } => {
                let values: Vec<f64> = (0..n)
                    .map(|_| if rng.random::<f64>() < *prevalence { 1.0 } else { 0.0 })
                    .collect();
                for (e, x) in eta.iter_mut().zip(&values) {
                    *e += effect * x;
                }
                effects.insert(f.name.clone(), *effect);
                numeric.insert(f.name.clone(), values.clone());
                columns.insert(f.name.clone(), ColumnData::Numeric(values.into_iter().map(Some).collect()));
            }
            TemplateKind::Categorical { levels, .. } => {
                let mut values = Vec::with_capacity(n);
                for e in eta.iter_mut() {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = levels.len() - 1;
                    for (k, l) in levels.iter().enumerate() {
                        acc += l.probability;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    *e += levels[pick].effect;
                    values.push(Some(levels[pick].name.clone()));
                }
                for l in levels {
                    effects.insert(one_hot_name(&f.name, &l.name), l.effect);
                }
                columns.insert(f.name.clone(), ColumnData::Levels(values));
            }
        }
    }
    for d in &template.derived {
        let inputs: Vec<&Vec<f64>> = d
            .inputs
            .iter()
            .map(|name| {
                numeric
                    .get(name)
                    .ok_or_else(|| SynthError::InvalidSpec(format!("derived '{}' needs numeric '{name}'", d.name)))
            })
            .collect::<Result<_, _>>()?;
        for (i, e) in eta.iter_mut().enumerate() {
            let xs: Vec<f64> = inputs.iter().map(|c| c[i]).collect();
            if let Some(v) = derive_value(d.derivation, &xs) {
                *e += d.effect * (v - d.center) / d.scale;
            }
        }
        effects.insert(d.name.clone(), d.effect);
    }

    // outcome dates
    let o = &template.outcome;
    let admin = template.admin_censor_date().0;
    let (lo, hi) = (o.assessment_window.0 .0, o.assessment_window.1 .0);
    let k = o.event_columns.len();
    let mut assessment = Vec::with_capacity(n);
    let mut event_cols: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n); k];
    let mut death = Vec::with_capacity(n);
    let mut n_prior = 0;
    let baseline = Baseline::Exponential { rate: o.baseline_rate };
    let to_days = |years: f64| ((years * DAYS_PER_YEAR).ceil() as i64).max(1);
    for &lp in eta.iter() {
        let a = rng.random_range(lo..=hi);
        assessment.push(Some(a as f64));
        let t = draw_event_time(&baseline, lp, &mut rng);
        let d = if o.death_rate > 0.0 {
            let e: f64 = Exp1.sample(&mut rng);
            e / o.death_rate
        } else {
            f64::INFINITY
        };
        let column = rng.random_range(0..k);
        let prior = rng.random::<f64>() < o.prior_event_rate;
        for (c, col) in event_cols.iter_mut().enumerate() {
            let mut date = None;
            if c == column && t.is_finite() {
                let day = a + to_days(t);
                if day <= admin {
                    date = Some(day as f64);
                }
            }
            if prior && c == (column + 1) % k {
                date = Some((a - rng.random_range(1..3650)) as f64);
            }
            col.push(date);
        }
        if prior {
            n_prior += 1;
        }
        death.push(if d.is_finite() && a + to_days(d) <= admin {
            Some((a + to_days(d)) as f64)
        } else {
            None
        });
    }

    // missingness, drawn after the truth is fixed
    for f in &template.features {
        if f.missing_rate <= 0.0 {
            continue;
        }
        match columns.get_mut(&f.name) {
            Some(ColumnData::Numeric(v)) => v.iter_mut().for_each(|x| {
                if rng.random::<f64>() < f.missing_rate {
                    *x = None;
                }
            }),
            Some(ColumnData::Levels(v)) => v.iter_mut().for_each(|x| {
                if rng.random::<f64>() < f.missing_rate {
                    *x = None;
                }
            }),
            None => {}
        }
    }

    let mut auxiliary = IndexMap::new();
    for (name, col) in o.event_columns.iter().zip(event_cols) {
        auxiliary.insert(format!("{name}{EVENT_DATE_SUFFIX}"), col);
    }
    auxiliary.insert("assessment_date".into(), assessment);
    auxiliary.insert("death_date".into(), death);

    let raw = RawCohort {
        row_ids: (1..=n).map(|i| format!("{}", 1_000_000 + i)).collect(),
        columns,
        auxiliary,
    };
    let built = crate::cohort::outcome_from_cohort(&raw, &schema)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let event_fraction = built.outcome.n_events() as f64 / built.outcome.len().max(1) as f64;
    Ok(TemplateCohort {
        raw,
        schema,
        truth: TemplateTruth {
            effects,
            baseline_rate: o.baseline_rate,
            linear_predictor: eta,
            n_prior_events: n_prior,
            event_fraction,
        },
    })
}

fn continuous(name: &str, mean: f64, sd: f64, min: Option<f64>, effect: f64) -> TemplateFeature {
    TemplateFeature {
        name: name.into(),
        kind: TemplateKind::Continuous { mean, sd, min, effect },
        missing_rate: 0.0,
        label: None,
        unit: String::new(),
        tags: Vec::new(),
        modifiable: false,
    }
}

fn binary(name: &str, prevalence: f64, effect: f64) -> TemplateFeature {
    TemplateFeature {
        name: name.into(),
        kind: TemplateKind::Binary { prevalence, effect },
        missing_rate: 0.0,
        label: None,
        unit: String::new(),
        tags: Vec::new(),
        modifiable: false,
    }
}

fn categorical(name: &str, levels: &[(&str, f64, f64)], ordinal: bool) -> TemplateFeature {
    TemplateFeature {
        name: name.into(),
        kind: TemplateKind::Categorical {
            levels: levels
                .iter()
                .map(|&(n, p, e)| LevelTemplate {
                    name: n.into(),
                    probability: p,
                    effect: e,
                })
                .collect(),
            ordinal,
        },
        missing_rate: 0.0,
        label: None,
        unit: String::new(),
        tags: Vec::new(),
        modifiable: false,
    }
}

impl TemplateFeature {
    fn labeled(mut self, label: &str) -> Self {
        self.label = Some(label.into());
        self
    }
    fn unit(mut self, unit: &str) -> Self {
        self.unit = unit.into();
        self
    }
    fn tag(mut self, tag: &str) -> Self {
        self.tags.push(tag.into());
        self
    }
    fn modifiable(mut self) -> Self {
        self.modifiable = true;
        self
    }
    fn missing(mut self, rate: f64) -> Self {
        self.missing_rate = rate;
        self
    }
}

impl CohortTemplate {
    /// A cardiovascular-style demo cohort: demographics, anthropometrics,
    /// blood pressure, cholesterol, heart rate, lifestyle factors, medical
    /// history, a categorical with a 0.1% level, and pure-noise columns.
    pub fn cardio_demo(n: usize, seed: u64) -> Self {
        let features = vec![
            continuous("age", 56.0, 8.0, Some(37.0), 0.6).labeled("Age").unit("years"),
            categorical("sex", &[("female", 0.56, 0.0), ("male", 0.44, 0.35)], false)
                .labeled("Sex")
                .tag("sex"),
            binary("university_degree", 0.33, -0.1).labeled("Holds a university degree"),
            continuous("waist", 90.0, 13.0, Some(50.0), 0.0).unit("cm").missing(0.01),
            continuous("hip", 103.0, 9.0, Some(60.0), 0.0).unit("cm").missing(0.01),
            continuous("sbp", 138.0, 19.0, Some(80.0), 0.3)
                .labeled("Systolic blood pressure")
                .unit("mmHg")
                .tag("blood_pressure")
                .missing(0.03),
            continuous("heart_rate", 70.0, 11.0, Some(40.0), 0.12)
                .labeled("Heart rate")
                .unit("bpm")
                .tag("heart_rate")
                .missing(0.03),
            continuous("total_cholesterol", 5.7, 1.1, Some(2.0), 0.1)
                .labeled("Total cholesterol")
                .unit("mmol/L")
                .tag("cholesterol")
                .missing(0.05),
            continuous("hdl_cholesterol", 1.45, 0.38, Some(0.4), -0.15)
                .labeled("HDL cholesterol")
                .unit("mmol/L")
                .tag("cholesterol")
                .missing(0.08),
            binary("bp_medication", 0.2, 0.25).labeled("Regularly takes blood pressure medications"),
            binary("diabetes", 0.05, 0.35).labeled("Diagnosis of diabetes"),
            binary("no_current_smoking", 0.89, -0.32)
                .labeled("Currently does not smoke")
                .modifiable(),
            continuous("pack_years", 8.0, 12.0, Some(0.0), 0.1)
                .labeled("Pack years of smoking")
                .unit("pack-years")
                .modifiable()
                .missing(0.1),
            categorical(
                "walking_pace",
                &[("slow", 0.08, 0.3), ("steady", 0.53, 0.0), ("brisk", 0.39, -0.2)],
                true,
            )
            .labeled("Usual walking pace")
            .modifiable()
            .missing(0.01),
            categorical(
                "salt_added",
                &[("never", 0.55, 0.0), ("sometimes", 0.28, 0.0), ("usually", 0.11, 0.05), ("always", 0.06, 0.12)],
                true,
            )
            .labeled("Salt added to food")
            .modifiable(),
            continuous("beer_weekly", 3.0, 3.0, Some(0.0), 0.0).unit("units/week").modifiable(),
            continuous("wine_weekly", 3.0, 3.0, Some(0.0), 0.0).unit("units/week").modifiable(),
            continuous("spirits_weekly", 1.0, 1.5, Some(0.0), 0.0).unit("units/week").modifiable(),
            continuous("other_alcohol_weekly", 0.5, 1.0, Some(0.0), 0.0).unit("units/week").modifiable(),
            binary("never_drinks", 0.08, 0.15).labeled("Never drinks alcohol").modifiable(),
            continuous("outdoor_hours_winter", 1.9, 1.5, Some(0.0), -0.05)
                .labeled("Time spent outdoors in winter")
                .unit("hours/day")
                .modifiable(),
            binary("supplements", 0.3, -0.03).labeled("Takes nutritional supplements").modifiable(),
            binary("father_heart_disease", 0.27, 0.17).labeled("Father diagnosed with heart disease"),
            binary("chest_pain", 0.15, 0.3).labeled("Experiences chest pain or discomfort"),
            categorical(
                "self_rated_health",
                &[("excellent", 0.17, -0.2), ("good", 0.58, 0.0), ("fair", 0.21, 0.1), ("poor", 0.04, 0.25)],
                true,
            )
            .labeled("Self-rated health"),
            binary("atrial_fibrillation", 0.01, 0.7).labeled("Diagnosis of atrial fibrillation and flutter (I48)"),
            categorical(
                "employment",
                &[("employed", 0.57, 0.0), ("retired", 0.33, 0.0), ("other", 0.099, 0.0), ("unknown", 0.001, 0.0)],
                false,
            ),
            continuous("noise_1", 0.0, 1.0, None, 0.0),
            continuous("noise_2", 0.0, 1.0, None, 0.0),
            continuous("noise_3", 0.0, 1.0, None, 0.0),
        ];
        let derived = vec![
            DerivedTemplate {
                name: "waist_to_hip".into(),
                derivation: Derivation::Ratio,
                inputs: vec!["waist".into(), "hip".into()],
                effect: 0.15,
                center: 0.87,
                scale: 0.1,
                label: Some("Waist-to-hip ratio".into()),
                tags: Vec::new(),
                modifiable: false,
            },
            DerivedTemplate {
                name: "cholesterol_ratio".into(),
                derivation: Derivation::Ratio,
                inputs: vec!["total_cholesterol".into(), "hdl_cholesterol".into()],
                effect: 0.15,
                center: 4.1,
                scale: 1.2,
                label: Some("Cholesterol ratio".into()),
                tags: vec!["cholesterol".into()],
                modifiable: false,
            },
            DerivedTemplate {
                name: "total_alcohol".into(),
                derivation: Derivation::Sum,
                inputs: vec![
                    "beer_weekly".into(),
                    "wine_weekly".into(),
                    "spirits_weekly".into(),
                    "other_alcohol_weekly".into(),
                ],
                effect: 0.0,
                center: 0.0,
                scale: 1.0,
                label: Some("Total alcohol intake".into()),
                tags: Vec::new(),
                modifiable: true,
            },
        ];
        Self {
            n,
            seed,
            features,
            derived,
            outcome: OutcomeTemplate {
                baseline_rate: 0.006,
                follow_up_years: 10.5,
                death_rate: 0.006,
                prior_event_rate: 0.03,
                event_columns: vec!["mi".into(), "stroke".into(), "heart_failure".into()],
                assessment_window: (Day(13_208), Day(14_883)),
            },
        }
    }
}
