use bjq_core::cox::{
    cox_expected_survival, cox_fit, log_partial_likelihood, CoxConfig, ROUNDING_SLACK,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

struct Data {
    times: Vec<f64>,
    events: Vec<bool>,
    x: DMatrix<f64>,
}

/// Exponential survival with hazard `exp(x . beta)` and uniform censoring.
fn exponential_data(rng: &mut ChaCha8Rng, n: usize, beta: &[f64], censor_max: f64) -> Data {
    let p = beta.len();
    let mut x = DMatrix::zeros(n, p);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let mut eta = 0.0;
        for j in 0..p {
            let v: f64 = rng.sample(StandardNormal);
            x[(i, j)] = v;
            eta += v * beta[j];
        }
        let t = Exp::new(eta.exp()).unwrap().sample(rng);
        let c = rng.random::<f64>() * censor_max;
        times.push(t.min(c));
        events.push(t <= c);
    }
    Data { times, events, x }
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

/// Breslow log partial likelihood summed over events directly.
fn brute_log_lik(d: &Data, beta: &[f64]) -> f64 {
    let eta: Vec<f64> = (0..d.times.len())
        .map(|i| (0..beta.len()).map(|j| d.x[(i, j)] * beta[j]).sum())
        .collect();
    let mut ll = 0.0;
    for i in 0..d.times.len() {
        if d.events[i] {
            let denom: f64 = (0..d.times.len())
                .filter(|&j| d.times[j] >= d.times[i])
                .map(|j| eta[j].exp())
                .sum();
            ll += eta[i] - denom.ln();
        }
    }
    ll
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for dataset in 0..20 {
        let p = 1 + dataset % 3;
        let truth: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut d = exponential_data(&mut rng, 40, &truth, 3.0);
        // Round times so that ties occur.
        for t in &mut d.times {
            *t = (*t * 10.0).ceil() / 10.0;
        }
        for _ in 0..10 {
            let beta = DVector::from_fn(p, |_, _| rng.random_range(-1.5..1.5));
            let analytic = log_partial_likelihood(&d.times, &d.events, &d.x, &beta).gradient;
            for j in 0..p {
                let h = 1e-5;
                let mut up = beta.clone();
                up[j] += h;
                let mut down = beta.clone();
                down[j] -= h;
                let fd = (log_partial_likelihood(&d.times, &d.events, &d.x, &up).value
                    - log_partial_likelihood(&d.times, &d.events, &d.x, &down).value)
                    / (2.0 * h);
                let rel = (analytic[j] - fd).abs() / analytic[j].abs().max(1.0);
                assert!(
                    rel < 1e-6,
                    "dataset {dataset} coord {j}: {} vs {fd}",
                    analytic[j]
                );
            }
        }
    }
}

#[test]
fn value_matches_direct_sum_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut d = exponential_data(&mut rng, 30, &[0.5, -0.3], 2.0);
    for t in &mut d.times {
        *t = (*t * 4.0).ceil() / 4.0;
    }
    for beta in [[0.0, 0.0], [0.4, -0.2], [-1.0, 2.0]] {
        let got = log_partial_likelihood(
            &d.times,
            &d.events,
            &d.x,
            &DVector::from_column_slice(&beta),
        )
        .value;
        assert!((got - brute_log_lik(&d, &beta)).abs() < 1e-9);
    }
}

#[test]
fn estimate_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..5 {
        let d = exponential_data(&mut rng, 80, &[0.8], 2.0);
        let fit = cox_fit(&d.times, &d.events, &d.x, &names(1), &CoxConfig::default()).unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut b = -4.0;
        while b <= 4.0 {
            let ll = brute_log_lik(&d, &[b]);
            if ll > best.0 {
                best = (ll, b);
            }
            b += 1e-3;
        }
        assert!(
            (fit.beta[0] - best.1).abs() < 2e-3,
            "{} vs {}",
            fit.beta[0],
            best.1
        );
        assert!(fit.log_likelihood >= best.0 - 1e-9);
    }
}

#[test]
fn newton_iterations_never_lower_the_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let d = exponential_data(&mut rng, 60, &[1.0, -0.5, 0.2], 1.5);
        let fit = cox_fit(&d.times, &d.events, &d.x, &names(3), &CoxConfig::default()).unwrap();
        assert!(fit.converged);
        for w in fit.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - ROUNDING_SLACK * (1.0 + w[0].abs()));
        }
    }
}

#[test]
fn large_samples_reach_the_score_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let d = exponential_data(&mut rng, 2000, &[0.4, -0.3, 1.1], 2.0);
        let config = CoxConfig::default();
        let fit = cox_fit(&d.times, &d.events, &d.x, &names(3), &config).unwrap();
        assert!(
            fit.converged && fit.iterations < 15,
            "{} iterations",
            fit.iterations
        );
        let score = log_partial_likelihood(&d.times, &d.events, &d.x, &fit.beta).gradient;
        assert!(score.amax() < config.tol, "{score}");
    }
}

#[test]
fn recovers_a_known_log_hazard_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let d = exponential_data(&mut rng, 3000, &[0.7], 3.0);
    let fit = cox_fit(&d.times, &d.events, &d.x, &names(1), &CoxConfig::default()).unwrap();
    assert!((fit.beta[0] - 0.7).abs() < 0.08, "{}", fit.beta[0]);
}

#[test]
fn null_effect_estimate_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let d = exponential_data(&mut rng, 2000, &[0.0, 0.0], 2.0);
    let fit = cox_fit(&d.times, &d.events, &d.x, &names(2), &CoxConfig::default()).unwrap();
    assert!(fit.beta.amax() < 0.15, "{:?}", fit.beta);
}

#[test]
fn expected_survival_decreases_with_risk() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = exponential_data(&mut rng, 300, &[0.9], 2.0);
    let fit = cox_fit(&d.times, &d.events, &d.x, &names(1), &CoxConfig::default()).unwrap();
    let means: Vec<f64> = [-1.0, 0.0, 1.0]
        .iter()
        .map(|&v| cox_expected_survival(&fit, &[v]))
        .collect();
    assert!(means[0] > means[1] && means[1] > means[2]);
    assert!(means.iter().all(|m| *m > 0.0 && *m <= fit.max_time));
}
