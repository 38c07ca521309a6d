use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survwright_core::cohort::OutcomeColumn;
use survwright_core::cox::{
    fit_cox_values, partial_loglik, predict_risk, predict_risks, risk_from_eta, summarize, CoxError, CoxOptions,
    TieMethod,
};
use survwright_core::metrics::kaplan_meier;
use survwright_core::step::StepFunction;
use survwright_core::synth::{generate, GeneratorSpec};

fn random_instance(seed: u64, n: usize, p: usize, tied: bool) -> (Array2<f64>, OutcomeColumn, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.5..1.5));
    let duration: Vec<f64> = (0..n)
        .map(|_| {
            if tied {
                rng.random_range(1..=5) as f64
            } else {
                rng.random_range(0.1..10.0)
            }
        })
        .collect();
    let mut event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    event[0] = true;
    let beta = Array1::from_shape_fn(p, |_| rng.random_range(-0.8..0.8));
    (x, OutcomeColumn::new(duration, event).unwrap(), beta)
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Max relative error of the analytic gradient and Hessian against central
/// differences of the value and gradient respectively.
fn finite_difference_errors(x: &Array2<f64>, o: &OutcomeColumn, beta: &Array1<f64>, ties: TieMethod) -> (f64, f64) {
    let h = 1e-5;
    let at = partial_loglik(beta, x.view(), o, ties).unwrap();
    let (mut g_err, mut h_err) = (0.0f64, 0.0f64);
    for j in 0..beta.len() {
        let mut up = beta.clone();
        let mut down = beta.clone();
        up[j] += h;
        down[j] -= h;
        let fu = partial_loglik(&up, x.view(), o, ties).unwrap();
        let fd = partial_loglik(&down, x.view(), o, ties).unwrap();
        g_err = g_err.max(rel_err(at.gradient[j], (fu.value - fd.value) / (2.0 * h)));
        for k in 0..beta.len() {
            h_err = h_err.max(rel_err(at.hessian[[k, j]], (fu.gradient[k] - fd.gradient[k]) / (2.0 * h)));
        }
    }
    (g_err, h_err)
}

#[test]
fn derivatives_match_finite_differences() {
    for seed in 0..24u64 {
        let n = 10 + (seed as usize * 7) % 41;
        let p = 1 + (seed as usize) % 5;
        let tied = seed % 2 == 0;
        let (x, o, beta) = random_instance(seed, n, p, tied);
        for ties in [TieMethod::Efron, TieMethod::Breslow] {
            let (g, h) = finite_difference_errors(&x, &o, &beta, ties);
            assert!(g < 1e-5 && h < 1e-5, "seed {seed} {ties:?}: gradient {g:e}, hessian {h:e}");
        }
    }
}

#[test]
fn recovers_truth_within_three_standard_errors() {
    let spec = GeneratorSpec::exponential(5000, vec![0.5, -0.5, 0.0], 0.05, 11);
    let c = generate(&spec).unwrap();
    let fit = fit_cox_values(c.design.values.view(), &c.design.column_names, &c.outcome, CoxOptions::default()).unwrap();
    for ((b, se), truth) in fit.beta.iter().zip(fit.standard_errors()).zip(&spec.beta) {
        assert!((b - truth).abs() < 3.0 * se, "{b} vs {truth} (se {se})");
    }
}

#[test]
fn estimates_tighten_with_sample_size() {
    let truth = [1.0, -1.0];
    let mean_error = |n: usize| {
        let mut total = 0.0;
        for seed in 0..5 {
            let c = generate(&GeneratorSpec::exponential(n, truth.to_vec(), 0.05, 100 + seed)).unwrap();
            let fit =
                fit_cox_values(c.design.values.view(), &c.design.column_names, &c.outcome, CoxOptions::default()).unwrap();
            total += fit.beta.iter().zip(truth).map(|(b, t)| (b - t).abs()).sum::<f64>();
        }
        total / 5.0
    };
    assert!(mean_error(5000) < mean_error(500));
}

#[test]
fn constant_column_is_singular_after_ridge_escalation() {
    let (mut x, o, _) = random_instance(3, 40, 3, false);
    x.column_mut(1).fill(2.0);
    let names: Vec<String> = vec!["a".into(), "const".into(), "b".into()];
    match fit_cox_values(x.view(), &names, &o, CoxOptions::default()) {
        Err(CoxError::Singular { column }) => assert_eq!(column, "const"),
        other => panic!("expected singularity, got {other:?}"),
    }
}

#[test]
fn full_one_hot_is_rescued_by_jitter() {
    let n = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = Array2::<f64>::zeros((n, 3));
    let mut duration = Vec::new();
    for i in 0..n {
        let level = rng.random_range(0..3);
        x[[i, level]] = 1.0;
        let rate = [0.05, 0.1, 0.2][level];
        let e: f64 = -rng.random::<f64>().ln();
        duration.push(e / rate);
    }
    let o = OutcomeColumn::new(duration.iter().map(|d| d.min(10.0)).collect(), duration.iter().map(|&d| d <= 10.0).collect())
        .unwrap();
    let names: Vec<String> = ["l0", "l1", "l2"].iter().map(|s| s.to_string()).collect();
    let fit = fit_cox_values(x.view(), &names, &o, CoxOptions::default()).unwrap();
    assert!(fit.convergence.jitter > 0.0);
    // only contrasts are identified
    assert!(fit.beta[2] - fit.beta[0] > 0.0);
}

#[test]
fn antitone_single_covariate_has_negative_coefficient() {
    let x = Array2::from_shape_fn((8, 1), |(i, _)| i as f64);
    let o = OutcomeColumn::new((1..=8).map(|t| t as f64).collect(), vec![true, true, false, true, true, true, false, true])
        .unwrap();
    // strictly later events for larger x would separate; flip two pairs so the MLE is finite
    let mut xv = x.clone();
    xv.swap([1, 0], [2, 0]);
    xv.swap([5, 0], [6, 0]);
    let fit = fit_cox_values(xv.view(), &["x".to_string()], &o, CoxOptions::default()).unwrap();
    assert!(fit.beta[0] < 0.0, "beta {}", fit.beta[0]);
}

#[test]
fn likelihood_never_decreases_beyond_rounding() {
    for seed in 0..6 {
        let (x, o, _) = random_instance(40 + seed, 50, 4, seed % 2 == 0);
        let names: Vec<String> = (0..4).map(|j| format!("x{j}")).collect();
        let fit = fit_cox_values(x.view(), &names, &o, CoxOptions::default()).unwrap();
        for w in fit.convergence.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn breslow_at_zero_beta_is_nelson_aalen() {
    let n = 6;
    let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 * 0.3 - 1.0);
    let o = OutcomeColumn::new((1..=n).map(|t| t as f64).collect(), vec![true; n]).unwrap();
    let h = survwright_core::cox::baseline_cumhaz(&[0.0], x.view(), &o).unwrap();
    let mut expected = 0.0;
    for k in 0..n {
        expected += 1.0 / (n - k) as f64;
        assert!((h.eval((k + 1) as f64) - expected).abs() < 1e-14);
    }
    assert_eq!(h.eval(0.0), 0.0);
    assert!(h.is_nondecreasing());
}

#[test]
fn breslow_tracks_exponential_cumulative_hazard() {
    let rate = 0.1;
    let c = generate(&GeneratorSpec::exponential(10_000, vec![0.0], rate, 21)).unwrap();
    let fit = fit_cox_values(c.design.values.view(), &c.design.column_names, &c.outcome, CoxOptions::default()).unwrap();
    // median of the exponential event time
    let t = std::f64::consts::LN_2 / rate;
    let h = survwright_core::cox::baseline_cumhaz(&[0.0], c.design.values.view(), &c.outcome).unwrap();
    assert!((h.eval(t) / (rate * t) - 1.0).abs() < 0.1);
    assert!((fit.baseline_cumhaz.eval(t) / (rate * t) - 1.0).abs() < 0.1);
}

#[test]
fn mean_predicted_risk_matches_kaplan_meier() {
    let spec = GeneratorSpec::exponential(8000, vec![0.7, -0.4], 0.015, 8);
    let train = generate(&spec).unwrap();
    let test = generate(&GeneratorSpec { seed: 9, ..spec.clone() }).unwrap();
    let fit =
        fit_cox_values(train.design.values.view(), &train.design.column_names, &train.outcome, CoxOptions::default())
            .unwrap();
    let risks = predict_risks(&fit, test.design.values.view(), 9.99);
    let mean = risks.iter().sum::<f64>() / risks.len() as f64;
    let observed = kaplan_meier(&test.outcome.duration, &test.outcome.event).unwrap().risk_at(9.99);
    assert!((mean - observed).abs() < 0.01, "predicted {mean}, observed {observed}");
}

#[test]
fn shifting_a_column_leaves_fit_and_ranking_unchanged() {
    let c = generate(&GeneratorSpec::exponential(800, vec![0.5, -0.3, 0.2], 0.05, 4)).unwrap();
    let opts = CoxOptions::default();
    let a = fit_cox_values(c.design.values.view(), &c.design.column_names, &c.outcome, opts).unwrap();
    let mut shifted = c.design.values.clone();
    shifted.column_mut(0).mapv_inplace(|v| v + 3.0);
    let b = fit_cox_values(shifted.view(), &c.design.column_names, &c.outcome, opts).unwrap();
    for j in 0..3 {
        assert!((a.beta[j] - b.beta[j]).abs() < opts.tol, "column {j}");
    }
    let rank = |eta: Vec<f64>| {
        let mut idx: Vec<usize> = (0..eta.len()).collect();
        idx.sort_by(|&i, &j| eta[i].total_cmp(&eta[j]));
        idx
    };
    assert_eq!(rank(a.linear_predictors(c.design.values.view())), rank(b.linear_predictors(shifted.view())));
}

#[test]
fn risk_edge_cases() {
    let zero = StepFunction::zero(20.0);
    assert_eq!(risk_from_eta(&zero, 3.0, 10.0).risk, 0.0);
    let h = StepFunction {
        times: vec![1.0, 2.0],
        values: vec![0.1, 0.3],
        max_time: 4.0,
    };
    let far = risk_from_eta(&h, 0.0, 10.0);
    assert!(far.extrapolated);
    assert!((far.risk - (1.0 - (-0.3f64).exp())).abs() < 1e-15);
    assert_eq!(risk_from_eta(&h, 800.0, 10.0).risk, 1.0);
}

#[test]
fn covariance_is_symmetric_and_summary_is_consistent() {
    let c = generate(&GeneratorSpec::exponential(1000, vec![0.4, 0.0], 0.05, 2)).unwrap();
    let fit = fit_cox_values(c.design.values.view(), &c.design.column_names, &c.outcome, CoxOptions::default()).unwrap();
    assert_eq!(fit.covariance, fit.covariance.t());
    assert!(fit.standard_errors().iter().all(|s| *s > 0.0));
    let s = summarize(&fit);
    for r in &s.rows {
        assert_eq!(r.hr, r.log_hr.exp());
        assert!(r.ci_low <= r.log_hr && r.log_hr <= r.ci_high);
    }
    let csv = s.sorted_by_log_hr().to_csv();
    assert!(csv.starts_with("covariate,log(HR),CI low,CI high,-log2(p)\nx1,"));
    let json = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<survwright_core::cox::CoxSummary>(&json).unwrap(), s);
    let x = [0.3, -1.0];
    let r = predict_risk(&fit, &x, 10.0).unwrap();
    assert!(r.risk > 0.0 && r.risk < 1.0);
}

proptest! {
    #[test]
    fn risk_is_monotone_in_eta_and_horizon(
        jumps in prop::collection::vec(0.0f64..0.5, 1..8),
        eta_a in -5.0f64..5.0, eta_b in -5.0f64..5.0,
        t_a in 0.0f64..12.0, t_b in 0.0f64..12.0,
    ) {
        let mut total = 0.0;
        let values: Vec<f64> = jumps.iter().map(|j| { total += j; total }).collect();
        let times: Vec<f64> = (1..=values.len()).map(|t| t as f64).collect();
        let h = StepFunction { max_time: times.len() as f64, times, values };
        let (lo, hi) = if eta_a <= eta_b { (eta_a, eta_b) } else { (eta_b, eta_a) };
        prop_assert!(risk_from_eta(&h, lo, 5.0).risk <= risk_from_eta(&h, hi, 5.0).risk);
        let (early, late) = if t_a <= t_b { (t_a, t_b) } else { (t_b, t_a) };
        prop_assert!(risk_from_eta(&h, eta_a, early).risk <= risk_from_eta(&h, eta_a, late).risk);
    }
}
