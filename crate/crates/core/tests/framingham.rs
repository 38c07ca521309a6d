use indexmap::IndexMap;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survwright_core::cohort::{ColumnData, OutcomeColumn, RawCohort};
use survwright_core::cox::CoxOptions;
use survwright_core::framingham::*;
use survwright_core::synth::{generate_cohort_like, CohortTemplate};

fn input(sex: Sex, age: f64, tc: f64, hdl: f64, sbp: f64, treated: bool, smoker: bool, diabetes: bool) -> FraminghamInput {
    FraminghamInput {
        sex,
        age,
        total_cholesterol: tc,
        hdl_cholesterol: hdl,
        sbp,
        sbp_treated: treated,
        current_smoker: smoker,
        diabetes,
    }
}

// Oracle: the published formula evaluated by hand in a separate script,
// 1 - S0^exp(sum(beta * x) - mean), 12 significant digits. The first
// profile of each sex is the worked example of the original article
// (10.48% and 15.6%).
#[test]
fn reference_profiles_match_hand_computed_values() {
    let c = CoefficientSet::bundled();
    let cases = [
        (input(Sex::Female, 61.0, 180.0, 47.0, 124.0, false, true, false), 0.104841802037),
        (
            input(Sex::Female, 45.0, 5.2 * 38.67, 1.6 * 38.67, 118.0, false, false, false),
            0.026028196427,
        ),
        (input(Sex::Female, 70.0, 240.0, 38.0, 162.0, true, false, true), 0.569911242149),
        (input(Sex::Male, 53.0, 161.0, 55.0, 125.0, true, false, true), 0.156226542002),
        (input(Sex::Male, 40.0, 190.0, 45.0, 130.0, false, false, false), 0.045078773473),
        (
            input(Sex::Male, 67.0, 6.4 * 38.67, 0.9 * 38.67, 151.0, true, true, true),
            0.911769329491,
        ),
    ];
    for (i, (x, want)) in cases.iter().enumerate() {
        let got = framingham_risk(x, &c).unwrap();
        assert!((got - want).abs() < 1e-6, "profile {i}: {got} vs {want}");
    }
}

#[test]
fn cholesterol_conversion_factor() {
    assert_eq!(MG_DL_PER_MMOL_L, 38.67);
    assert!((mmol_to_mg_dl(5.0) - 193.35).abs() < 1e-12);
}

#[test]
fn centered_predictor_gives_one_minus_baseline_survival() {
    let x = input(Sex::Female, 55.0, 200.0, 50.0, 130.0, false, false, false);
    let mut c = CoefficientSet::bundled();
    c.female.mean_linear_predictor = linear_predictor(&x, &c).unwrap();
    let r = framingham_risk(&x, &c).unwrap();
    assert!((r - (1.0 - c.female.baseline_survival_10y)).abs() < 1e-14);
}

#[test]
fn nonpositive_log_input_names_the_field() {
    let c = CoefficientSet::bundled();
    let err = framingham_risk(&input(Sex::Male, 50.0, 200.0, 0.0, 120.0, false, false, false), &c).unwrap_err();
    assert!(err.to_string().contains("hdl_cholesterol"), "{err}");
    let err = framingham_risk(&input(Sex::Male, 50.0, 200.0, 40.0, -1.0, false, false, false), &c).unwrap_err();
    assert!(err.to_string().contains("sbp"), "{err}");
}

#[test]
fn coefficient_file_contracts() {
    let text = include_str!("../data/framingham_general_cvd.json");
    let c = CoefficientSet::from_json(text).unwrap();
    assert_eq!(CoefficientSet::from_json(&c.to_json()).unwrap(), c);

    let mut doc: serde_json::Value = serde_json::from_str(text).unwrap();
    doc.as_object_mut().unwrap().remove("female");
    let err = CoefficientSet::from_json(&doc.to_string()).unwrap_err();
    assert_eq!(err.to_string(), "missing sex block: female");

    let mut doc: serde_json::Value = serde_json::from_str(text).unwrap();
    doc["male"].as_object_mut().unwrap().remove("baseline_survival_10y");
    assert!(matches!(
        CoefficientSet::from_json(&doc.to_string()),
        Err(FraminghamError::MissingBaselineSurvival(Sex::Male))
    ));

    let mut doc: serde_json::Value = serde_json::from_str(text).unwrap();
    doc["male"]["baseline_survival_10y"] = 1.2.into();
    assert!(CoefficientSet::from_json(&doc.to_string()).is_err());

    let dir = std::env::temp_dir().join(format!("fram-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("c.json");
    std::fs::write(&path, c.to_json()).unwrap();
    assert_eq!(load_coefficients(&path).unwrap(), c);
    assert!(load_coefficients(&dir.join("missing.json")).is_err());
}

fn raw_rows(columns: Vec<(&str, ColumnData)>, aux: Vec<(&str, Vec<Option<f64>>)>) -> RawCohort {
    let n = columns[0].1.len();
    RawCohort {
        row_ids: (0..n).map(|i| format!("r{i}")).collect(),
        columns: columns.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        auxiliary: aux.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<IndexMap<_, _>>(),
    }
}

fn levels(v: &[Option<&str>]) -> ColumnData {
    ColumnData::Levels(v.iter().map(|s| s.map(str::to_string)).collect())
}

fn numbers(v: &[Option<f64>]) -> ColumnData {
    ColumnData::Numeric(v.to_vec())
}

#[test]
fn derivation_rules() {
    let raw = raw_rows(
        vec![
            ("sex", levels(&[Some("male"), Some("female"), Some("female"), Some("male")])),
            ("age", numbers(&[Some(50.0), Some(60.0), Some(55.0), Some(58.0)])),
            ("tc", numbers(&[Some(5.0), Some(6.0), Some(4.0), Some(5.5)])),
            ("hdl", numbers(&[Some(1.2), Some(1.5), Some(1.1), Some(1.0)])),
            ("sbp_a", numbers(&[Some(130.0), Some(150.0), Some(120.0), None])),
            ("sbp_b", numbers(&[Some(140.0), Some(146.0), Some(124.0), Some(140.0)])),
            ("bp_meds", levels(&[Some("no"), Some("yes"), Some("no"), Some("no")])),
            ("smoking", levels(&[Some("current"), Some("never"), Some("previous"), Some("current")])),
        ],
        vec![
            ("assessment", vec![Some(1000.0), Some(1000.0), Some(1000.0), Some(1000.0)]),
            ("diabetes_date", vec![Some(1500.0), Some(900.0), None, Some(10.0)]),
        ],
    );
    let fields = FraminghamFields {
        sex: "sex".into(),
        age: "age".into(),
        total_cholesterol: "tc".into(),
        hdl_cholesterol: "hdl".into(),
        sbp: vec!["sbp_a".into(), "sbp_b".into()],
        sbp_treated: FlagSource::AnyOf {
            columns: vec!["bp_meds".into()],
        },
        current_smoker: FlagSource::ValueIn {
            column: "smoking".into(),
            values: vec!["current".into()],
        },
        diabetes: FlagSource::DiagnosedBy {
            columns: vec!["diabetes_date".into()],
            assessment: "assessment".into(),
        },
    };
    let out = derive_framingham_inputs(&raw, &fields);
    assert_eq!(out.rows, vec![0, 1, 2]);
    assert_eq!(out.excluded.len(), 1);
    assert_eq!(out.excluded[0].row_id, "r3");
    assert!(out.excluded[0].reason.contains("sbp_a"), "{}", out.excluded[0].reason);

    let a = &out.inputs[0];
    assert_eq!(a.sex, Sex::Male);
    assert_eq!(a.sbp, 135.0);
    assert_eq!(a.total_cholesterol, 5.0 * 38.67);
    assert_eq!(a.hdl_cholesterol, 1.2 * 38.67);
    assert!(a.current_smoker && !a.sbp_treated);
    // diagnosed after assessment
    assert!(!a.diabetes);
    let b = &out.inputs[1];
    assert!(b.diabetes && b.sbp_treated && !b.current_smoker);
    assert!(!out.inputs[2].diabetes);
}

#[test]
fn derives_inputs_from_the_demo_cohort() {
    let cohort = generate_cohort_like(&CohortTemplate::cardio_demo(2_000, 3)).unwrap();
    let out = derive_framingham_inputs(&cohort.raw, &FraminghamFields::cardio_demo());
    assert_eq!(out.inputs.len() + out.excluded.len(), 2_000);
    assert!(out.inputs.len() > 1_500, "{} kept", out.inputs.len());
    let smokers = out.inputs.iter().filter(|x| x.current_smoker).count() as f64 / out.inputs.len() as f64;
    assert!(smokers > 0.05 && smokers < 0.2, "{smokers}");
    let c = CoefficientSet::bundled();
    for x in &out.inputs {
        let r = framingham_risk(x, &c).unwrap();
        assert!(r > 0.0 && r < 1.0);
    }
}

/// Cohort simulated from a seven-variable Cox model whose coefficients
/// differ from the published ones.
fn seven_variable_cohort(n: usize, seed: u64) -> (Vec<FraminghamInput>, OutcomeColumn) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = [4.0, 0.3, -1.5, 1.0, 1.5, 0.9, 0.2];
    let mut inputs = Vec::with_capacity(n);
    let mut duration = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for _ in 0..n {
        let x = input(
            if rng.random_bool(0.5) { Sex::Female } else { Sex::Male },
            rng.random_range(40.0..75.0),
            rng.random_range(140.0..300.0),
            rng.random_range(30.0..90.0),
            rng.random_range(100.0..180.0),
            rng.random_bool(0.2),
            rng.random_bool(0.15),
            rng.random_bool(0.07),
        );
        let row = design_row(&x).unwrap();
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() - 17.0;
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let t = -u.ln() / (0.01 * eta.exp());
        duration.push(t.min(10.0));
        event.push(t <= 10.0);
        inputs.push(x);
    }
    (inputs, OutcomeColumn::new(duration, event).unwrap())
}

#[test]
fn refit_beats_fixed_formula_in_sample() {
    let (inputs, outcome) = seven_variable_cohort(6_000, 11);
    assert!(outcome.n_events() > 300, "{} events", outcome.n_events());
    let c = CoefficientSet::bundled();
    let formula: Vec<f64> = inputs.iter().map(|x| framingham_risk(x, &c).unwrap()).collect();
    let refit = RefitModels::fit(&inputs, &outcome, CoxOptions::default()).unwrap();
    let refit_risks = refit.risks(&inputs, HORIZON_YEARS).unwrap();
    let sexes: Vec<Sex> = inputs.iter().map(|x| x.sex).collect();
    let report = compare_scores(
        &[
            ScoreColumn {
                score: "Framingham score",
                method: "published formula",
                risks: &formula,
            },
            ScoreColumn {
                score: "Framingham score",
                method: "Cox refit",
                risks: &refit_risks,
            },
        ],
        &sexes,
        &outcome.duration,
        &outcome.event,
        &CompareOptions::default(),
    )
    .unwrap();
    let (f, r) = (&report.rows[0], &report.rows[1]);
    for (a, b) in [(&f.men, &r.men), (&f.women, &r.women), (&f.all, &r.all)] {
        let (a, b) = (a.unwrap().c_index, b.unwrap().c_index);
        assert!(b >= a, "refit {b} < formula {a}");
    }
    let table = report.to_table();
    assert!(table.starts_with("Score\tMethod\tMen\tWomen\tAll participants\n"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn identical_scores_give_identical_cells() {
    let (inputs, outcome) = seven_variable_cohort(800, 2);
    let c = CoefficientSet::bundled();
    let risks: Vec<f64> = inputs.iter().map(|x| framingham_risk(x, &c).unwrap()).collect();
    let sexes: Vec<Sex> = inputs.iter().map(|x| x.sex).collect();
    let col = ScoreColumn {
        score: "a",
        method: "m",
        risks: &risks,
    };
    let opts = CompareOptions {
        rounds: 20,
        level: 0.95,
        seed: 4,
    };
    let report = compare_scores(&[col, col], &sexes, &outcome.duration, &outcome.event, &opts).unwrap();
    assert_eq!(report.rows[0].men, report.rows[1].men);
    assert_eq!(report.rows[0].women, report.rows[1].women);
    assert_eq!(report.rows[0].all, report.rows[1].all);
    let all = report.rows[0].all.unwrap();
    let (lo, hi) = all.ci.unwrap();
    assert!(lo <= hi && all.n == 800);
    assert!(compare_scores(&[col], &sexes[1..], &outcome.duration, &outcome.event, &opts).is_err());
}

fn arb_input() -> impl Strategy<Value = FraminghamInput> {
    (
        prop::bool::ANY,
        30.0..80.0f64,
        100.0..400.0f64,
        20.0..120.0f64,
        90.0..200.0f64,
        prop::bool::ANY,
        prop::bool::ANY,
        prop::bool::ANY,
    )
        .prop_map(|(female, age, tc, hdl, sbp, t, s, d)| {
            input(if female { Sex::Female } else { Sex::Male }, age, tc, hdl, sbp, t, s, d)
        })
}

proptest! {
    #[test]
    fn conversion_is_exact(x in 0.1..20.0f64) {
        prop_assert_eq!(mmol_to_mg_dl(x).to_bits(), (x * 38.67).to_bits());
    }

    #[test]
    fn risk_is_a_probability(x in arb_input()) {
        let r = framingham_risk(&x, &CoefficientSet::bundled()).unwrap();
        prop_assert!(r > 0.0 && r < 1.0);
    }

    #[test]
    fn risk_follows_coefficient_signs(x in arb_input(), step in 1.0..20.0f64) {
        let c = CoefficientSet::bundled();
        let base = framingham_risk(&x, &c).unwrap();
        let k = c.for_sex(x.sex);
        let sign = |b: f64| if b > 0.0 { 1.0 } else { -1.0 };
        let sbp_coef = if x.sbp_treated { k.ln_sbp_treated } else { k.ln_sbp_untreated };
        let moves = [
            (FraminghamInput { age: x.age + step, ..x }, k.ln_age),
            (FraminghamInput { total_cholesterol: x.total_cholesterol + step, ..x }, k.ln_total_cholesterol),
            (FraminghamInput { hdl_cholesterol: x.hdl_cholesterol + step, ..x }, k.ln_hdl_cholesterol),
            (FraminghamInput { sbp: x.sbp + step, ..x }, sbp_coef),
        ];
        for (moved, coef) in moves {
            let r = framingham_risk(&moved, &c).unwrap();
            prop_assert!((r - base) * sign(coef) > 0.0, "{coef}: {base} -> {r}");
        }
        let on = framingham_risk(&FraminghamInput { current_smoker: true, ..x }, &c).unwrap();
        let off = framingham_risk(&FraminghamInput { current_smoker: false, ..x }, &c).unwrap();
        prop_assert!(on > off);
        let on = framingham_risk(&FraminghamInput { diabetes: true, ..x }, &c).unwrap();
        let off = framingham_risk(&FraminghamInput { diabetes: false, ..x }, &c).unwrap();
        prop_assert!(on > off);
    }
}
