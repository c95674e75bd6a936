use bjq_core::qlearning::{build_design, decide, fit_stage, pseudo_outcomes, stage_q_values};
use bjq_core::simulation::{generate_cohort, replicate_rng, SimConfig};
use bjq_core::{fit_policy, recommend_sequence, Arm, Cohort, FitMethod, Method};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn uncensored(n: usize, stages: usize, seed: u64) -> (SimConfig, Cohort) {
    let cfg = SimConfig {
        n,
        stages,
        censoring: false,
        missing_rate: 0.0,
        ..SimConfig::default()
    };
    let sim = generate_cohort(&cfg, &mut replicate_rng(seed, 0, 0));
    (cfg, sim.observed)
}

fn censored(n: usize, stages: usize, seed: u64) -> (SimConfig, Cohort) {
    let cfg = SimConfig {
        n,
        stages,
        missing_rate: 0.0,
        ..SimConfig::default()
    };
    let sim = generate_cohort(&cfg, &mut replicate_rng(seed, 0, 0));
    (cfg, sim.observed)
}

fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    x.clone().svd(true, true).solve(y, 1e-14).unwrap()
}

fn swap_arms(cohort: &Cohort) -> Cohort {
    let mut out = cohort.clone();
    for t in &mut out.trajectories {
        for r in &mut t.stages {
            r.treatment = r.treatment.other();
        }
    }
    out.treatment_labels.swap(0, 1);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Without censoring the whole backward pass is textbook fitted-Q.
    #[test]
    fn uncensored_pipeline_is_fitted_q(seed in 0u64..1000) {
        let (cfg, cohort) = uncensored(120, 2, seed);
        let terms = cfg.q_terms();
        let fit = fit_policy(&cohort, 2, &terms, &cfg.imputer(Method::BjQ)).unwrap();

        let d2 = build_design(&cohort, 2, &terms, None).unwrap();
        let y2 = DVector::from_iterator(d2.subjects.len(), d2.subjects.iter().map(|&i| cohort.trajectories[i].stages[1].time));
        let beta2 = lstsq(&d2.matrix, &y2);
        prop_assert!((&fit.policy.model(2).beta_hat - &beta2).amax() < 1e-8);

        let d1 = build_design(&cohort, 1, &terms, None).unwrap();
        let da = build_design(&cohort, 2, &terms, Some(Arm::A)).unwrap();
        let db = build_design(&cohort, 2, &terms, Some(Arm::B)).unwrap();
        let qa = &da.matrix * &beta2;
        let qb = &db.matrix * &beta2;
        let target = DVector::from_iterator(
            d1.subjects.len(),
            d1.subjects.iter().map(|&i| {
                let t = &cohort.trajectories[i];
                let future = d2.subjects.iter().position(|&j| j == i).map_or(0.0, |r| qa[r].max(qb[r]));
                t.stages[0].time + future
            }),
        );
        let beta1 = lstsq(&d1.matrix, &target);
        prop_assert!((&fit.policy.model(1).beta_hat - beta1).amax() < 1e-8);
    }

    #[test]
    fn positive_rescaling_keeps_decisions(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let (cfg, cohort) = censored(150, 2, seed);
        let terms = cfg.q_terms();
        let fit = fit_policy(&cohort, 2, &terms, &cfg.imputer(Method::BjQ)).unwrap();
        let stage1 = &fit.stages[0];
        let pseudo = pseudo_outcomes(&cohort, &stage1.subjects, &stage1.imputed, fit.policy.model(2)).unwrap();
        let scaled: Vec<f64> = pseudo.iter().map(|p| p * scale).collect();
        let base = fit_stage(&cohort, 1, &pseudo, &terms, FitMethod::BuckleyJames).unwrap();
        let other = fit_stage(&cohort, 1, &scaled, &terms, FitMethod::BuckleyJames).unwrap();
        for traj in &cohort.trajectories {
            let qa = base.counterfactual_q(&cohort, traj, Arm::A).unwrap();
            let qb = base.counterfactual_q(&cohort, traj, Arm::B).unwrap();
            if (qa - qb).abs() > 1e-9 * qa.abs().max(1.0) {
                prop_assert_eq!(decide(&base, &cohort, traj).unwrap(), decide(&other, &cohort, traj).unwrap());
            }
        }
    }

    #[test]
    fn swapping_arm_labels_flips_recommendations(seed in 0u64..1000) {
        let (cfg, cohort) = censored(150, 2, seed);
        let swapped = swap_arms(&cohort);
        let terms = cfg.q_terms();
        let imputer = cfg.imputer(Method::BjQ);
        let fit = fit_policy(&cohort, 2, &terms, &imputer).unwrap();
        let fit_swapped = fit_policy(&swapped, 2, &terms, &imputer).unwrap();
        for (t, ts) in cohort.trajectories.iter().zip(&swapped.trajectories) {
            let q = stage_q_values(&fit.policy, &cohort, t).unwrap();
            if q.iter().any(|(a, b)| (a - b).abs() < 1e-6) {
                continue;
            }
            let seq = recommend_sequence(&fit.policy, &cohort, t).unwrap();
            let seq_swapped = recommend_sequence(&fit_swapped.policy, &swapped, ts).unwrap();
            let flipped: Vec<Arm> = seq.iter().map(|a| a.other()).collect();
            prop_assert_eq!(seq_swapped, flipped);
        }
    }

    #[test]
    fn sequence_factorises_into_stage_decisions(seed in 0u64..1000) {
        let (cfg, cohort) = censored(150, 2, seed);
        let fit = fit_policy(&cohort, 2, &cfg.q_terms(), &cfg.imputer(Method::BjQ)).unwrap();
        for t in &cohort.trajectories {
            let seq = recommend_sequence(&fit.policy, &cohort, t).unwrap();
            let stagewise: Vec<Arm> = (1..=seq.len()).map(|k| decide(fit.policy.model(k), &cohort, t).unwrap()).collect();
            prop_assert_eq!(seq, stagewise);
        }
    }
}
