use survwright_core::cohort::{prune_rare, write_cohort_csv, CohortStore, Preprocessor, UnseenLevels};
use survwright_core::cox::{fit_cox, CoxOptions};
use survwright_core::metrics::concordance_index;
use survwright_core::synth::*;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn null_effect_median_matches_the_exponential() {
    let rate = 0.2;
    let spec = GeneratorSpec {
        censoring: Censoring::None,
        ..GeneratorSpec::exponential(50_000, vec![0.0, 0.0], rate, 1)
    };
    let c = generate(&spec).unwrap();
    assert!(c.outcome.event.iter().all(|&e| e));
    let m = median(c.outcome.duration.clone());
    let expected = std::f64::consts::LN_2 / rate;
    assert!((m / expected - 1.0).abs() < 0.05, "{m} vs {expected}");
}

#[test]
fn null_effect_linear_predictor_has_no_signal() {
    let c = generate(&GeneratorSpec::exponential(5_000, vec![0.0], 0.1, 2)).unwrap();
    // all-zero predictor: every comparable pair is a tie
    let ci = concordance_index(&c.truth.linear_predictor, &c.outcome.duration, &c.outcome.event).unwrap();
    assert!((ci - 0.5).abs() < 0.02);
    // an arbitrary covariate unrelated to the outcome
    let x: Vec<f64> = c.design.values.column(0).to_vec();
    let cx = concordance_index(&x, &c.outcome.duration, &c.outcome.event).unwrap();
    assert!((cx - 0.5).abs() < 0.02, "{cx}");
}

#[test]
fn event_fraction_matches_monte_carlo_expectation() {
    let (rate, tc) = (0.05, 10.0);
    let beta = vec![0.6, -0.4];
    let c = generate(&GeneratorSpec::exponential(20_000, beta, rate, 3)).unwrap();
    // 1 - E[exp(-rate * tc * e^eta)], averaged over the drawn covariates
    let expected = 1.0
        - c.truth
            .linear_predictor
            .iter()
            .map(|eta| (-rate * tc * eta.exp()).exp())
            .sum::<f64>()
            / 20_000.0;
    let observed = c.outcome.n_events() as f64 / 20_000.0;
    assert!((observed - expected).abs() < 0.02, "{observed} vs {expected}");
    assert!((c.truth.event_fraction - observed).abs() < 1e-12);
}

#[test]
fn fits_approach_truth_as_n_grows() {
    let beta = vec![1.0, -1.0];
    let error = |n: usize| {
        let c = generate(&GeneratorSpec::exponential(n, beta.clone(), 0.1, 4)).unwrap();
        let fit = fit_cox(&c.design, &c.outcome, CoxOptions::default()).unwrap();
        fit.beta.iter().zip(&beta).map(|(b, t)| (b - t).abs()).fold(0.0, f64::max)
    };
    let (small, large) = (error(500), error(20_000));
    assert!(large < 0.05, "{large}");
    assert!(large < small, "{large} !< {small}");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let bytes = |seed| {
        let c = generate(&GeneratorSpec::exponential(1_000, vec![0.3, 0.1], 0.1, seed)).unwrap();
        let (raw, schema) = c.to_raw();
        let mut out = Vec::new();
        write_cohort_csv(&mut out, &raw, &schema).unwrap();
        out
    };
    assert_eq!(bytes(7), bytes(7));
    assert_ne!(bytes(7), bytes(8));

    let template = |seed| {
        let c = generate_cohort_like(&CohortTemplate::cardio_demo(500, seed)).unwrap();
        let mut out = Vec::new();
        write_cohort_csv(&mut out, &c.raw, &c.schema).unwrap();
        out
    };
    assert_eq!(template(5), template(5));
}

#[test]
fn injected_missingness_matches_the_stated_rate() {
    let mut t = CohortTemplate::cardio_demo(10_000, 6);
    for f in &mut t.features {
        f.missing_rate = if f.name == "sbp" { 0.10 } else { 0.0 };
    }
    let c = generate_cohort_like(&t).unwrap();
    let sbp = c.raw.column("sbp").unwrap().missing_count() as f64 / 10_000.0;
    assert!((sbp - 0.10).abs() < 0.02, "{sbp}");
    assert_eq!(c.raw.missing_total(), c.raw.column("sbp").unwrap().missing_count());
}

#[test]
fn rare_level_is_pruned_downstream() {
    let c = generate_cohort_like(&CohortTemplate::cardio_demo(5_000, 7)).unwrap();
    let mut csv = Vec::new();
    write_cohort_csv(&mut csv, &c.raw, &c.schema).unwrap();
    let store = CohortStore::ingest(&csv[..], c.schema.clone()).unwrap();
    let pre = Preprocessor::fit(&store.raw, &store.schema).unwrap();
    let design = pre.transform(&store.raw, UnseenLevels::Strict).unwrap();
    let pruned = prune_rare(&design, 0.01);
    assert!(pruned.dropped.contains(&"employment=unknown".to_string()), "{:?}", pruned.dropped);
    assert!(pruned.design.column_index("employment=unknown").is_none());
    assert!(pruned.design.column_index("employment=retired").is_some());
}
