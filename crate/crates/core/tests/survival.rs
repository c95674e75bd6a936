use bjq_core::survival::{bj_fit, bj_impute, bj_step, km_estimate, BJConfig, StageSample};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Product-limit CDF at `u` from its textbook definition.
fn product_limit_cdf(values: &[f64], events: &[bool], u: f64) -> f64 {
    let mut times: Vec<f64> = values
        .iter()
        .zip(events)
        .filter(|(v, e)| **e && **v <= u)
        .map(|(v, _)| *v)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut surv = 1.0;
    for t in times {
        let deaths = values
            .iter()
            .zip(events)
            .filter(|(v, e)| **e && **v == t)
            .count();
        let at_risk = values.iter().filter(|v| **v >= t).count();
        surv *= 1.0 - deaths as f64 / at_risk as f64;
    }
    1.0 - surv
}

fn censored_sample() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..=20)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0u32..12, n),
                prop::collection::vec(prop::bool::weighted(0.6), n),
            )
        })
        .prop_map(|(v, mut e)| {
            if !e.iter().any(|x| *x) {
                e[0] = true;
            }
            (v.into_iter().map(|x| x as f64 * 0.5 - 2.0).collect(), e)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn km_matches_product_limit((values, events) in censored_sample()) {
        let km = km_estimate(&values, &events, false).unwrap();
        for &u in values.iter().chain([-10.0, 10.0].iter()) {
            prop_assert!((km.cdf(u) - product_limit_cdf(&values, &events, u)).abs() < 1e-12);
        }
        for w in km.cdf_values.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn tail_correction_matches_relabelled_oracle((values, events) in censored_sample()) {
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let relabelled: Vec<bool> = values.iter().zip(&events).map(|(v, e)| *e || *v == max).collect();
        let km = km_estimate(&values, &events, true).unwrap();
        for &u in &values {
            prop_assert!((km.cdf(u) - product_limit_cdf(&values, &relabelled, u)).abs() < 1e-12);
        }
        prop_assert!((km.total_mass() - 1.0).abs() < 1e-12);
    }
}

/// Design with an intercept and two continuous covariates, plus outcomes.
fn regression_sample(
    censor_rate: f64,
) -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>, Vec<bool>)> {
    (12usize..40).prop_flat_map(move |n| {
        (
            prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -1.0f64..1.0, 0.0f64..1.0), n),
            prop::collection::vec(-1.0f64..3.0, 3),
        )
            .prop_map(move |(rows, beta)| {
                let mut data = Vec::with_capacity(rows.len() * 3);
                let mut times = Vec::with_capacity(rows.len());
                let mut events = Vec::with_capacity(rows.len());
                for (i, (x1, x2, eps, u)) in rows.iter().enumerate() {
                    data.extend([1.0, *x1, *x2]);
                    let y = 10.0 + beta[0] + beta[1] * x1 + beta[2] * x2 + eps;
                    // Keep the first few rows uncensored so the fit is identifiable.
                    if i >= 6 && *u < censor_rate {
                        times.push(y - u * 2.0 - 0.01);
                        events.push(false);
                    } else {
                        times.push(y);
                        events.push(true);
                    }
                }
                (DMatrix::from_row_slice(rows.len(), 3, &data), times, events)
            })
    })
}

fn lstsq(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    x.clone()
        .svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-14)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn uncensored_fit_is_least_squares((x, y, _) in regression_sample(0.0)) {
        let n = y.len();
        let sample = StageSample::new(x.clone(), y.clone(), vec![true; n]).unwrap();
        let fit = bj_fit(&sample, &BJConfig::default()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!((fit.beta - lstsq(&x, &y)).amax() < 1e-8);
    }

    #[test]
    fn imputations_dominate_censored_times((x, y, d) in regression_sample(0.4)) {
        let sample = StageSample::new(x, y.clone(), d.clone()).unwrap();
        let fit = bj_fit(&sample, &BJConfig::default()).unwrap();
        let imputed = bj_impute(&sample, &fit.beta, true).unwrap();
        for i in 0..y.len() {
            if d[i] {
                prop_assert_eq!(imputed[i], y[i]);
            } else {
                prop_assert!(imputed[i] >= y[i] - 1e-9);
            }
        }
    }

    #[test]
    fn converged_fit_is_a_fixed_point((x, y, d) in regression_sample(0.4)) {
        let config = BJConfig::default();
        let sample = StageSample::new(x, y, d).unwrap();
        let fit = bj_fit(&sample, &config).unwrap();
        if fit.converged {
            let next = bj_step(&sample, &fit.beta, config.tail_correction).unwrap();
            prop_assert!((next - &fit.beta).amax() <= config.tol);
        } else {
            prop_assert!(fit.oscillation_detected || fit.iterations == config.max_iter);
        }
    }

    #[test]
    fn shifting_outcomes_moves_only_the_intercept((x, y, d) in regression_sample(0.4), shift in -4i32..4) {
        let c = shift as f64;
        let base = bj_fit(&StageSample::new(x.clone(), y.clone(), d.clone()).unwrap(), &BJConfig::default()).unwrap();
        let moved: Vec<f64> = y.iter().map(|v| v + c).collect();
        let shifted = bj_fit(&StageSample::new(x, moved, d).unwrap(), &BJConfig::default()).unwrap();
        prop_assert_eq!(base.converged, shifted.converged);
        prop_assert!((shifted.beta[0] - base.beta[0] - c).abs() < 1e-6);
        prop_assert!((shifted.beta.rows(1, 2) - base.beta.rows(1, 2)).amax() < 1e-6);
    }

    #[test]
    fn scaling_outcomes_scales_coefficients((x, y, d) in regression_sample(0.4), k in 1u32..4) {
        let s = f64::from(1u32 << k);
        let base = bj_fit(&StageSample::new(x.clone(), y.clone(), d.clone()).unwrap(), &BJConfig::default()).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| v * s).collect();
        let config = BJConfig { tol: 1e-6 * s, ..BJConfig::default() };
        let fit = bj_fit(&StageSample::new(x, scaled, d).unwrap(), &config).unwrap();
        prop_assert!((fit.beta - base.beta * s).amax() < 1e-6 * s);
    }
}
