use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{quantile_sorted, SimConfig, SEX, TUMOR_SIZE};
use crate::cohort::{Arm, Cohort, StageRecord, Trajectory};

/// Noise-free and potential-outcome quantities for one subject and stage.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleStage {
    pub sex: f64,
    pub tumor_size: f64,
    /// Potential stage durations (sharing the same noise draw).
    pub time_a: f64,
    pub time_b: f64,
    /// Expected stage duration under each arm.
    pub q_a: f64,
    pub q_b: f64,
    pub decision: Arm,
}

#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    /// What an analyst sees: censored stage records, entry by survival.
    pub observed: Cohort,
    /// Every subject with all stages and true covariates, for evaluation.
    pub truth: Cohort,
    /// `oracle[i][k - 1]` for subject `i`, stage `k`.
    pub oracle: Vec<Vec<OracleStage>>,
}

impl SimulatedCohort {
    /// Share of subjects whose follow-up ended censored.
    pub fn censoring_fraction(&self) -> f64 {
        let censored = self
            .observed
            .trajectories
            .iter()
            .filter(|t| t.stages.last().is_some_and(|r| !r.event))
            .count();
        censored as f64 / self.observed.trajectories.len() as f64
    }
}

fn mean_time(beta: &[f64; 5], sex: f64, tumor: f64, arm: Arm) -> f64 {
    let a = arm.indicator();
    beta[0] + beta[1] * sex + beta[2] * tumor + beta[3] * a + beta[4] * tumor * a
}

/// Draws one cohort from the linear stage-duration model.
///
/// Per subject (in order): sex, then for each stage tumour size, arm and
/// noise. Censoring uniforms are drawn afterwards, one per subject.
pub fn generate_cohort<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> SimulatedCohort {
    let beta = &config.coefficients;
    let noise = Normal::new(0.0, config.noise_sd).expect("validated noise sd");
    let names = vec![SEX.to_string(), TUMOR_SIZE.to_string()];

    let mut oracle = Vec::with_capacity(config.n);
    let mut arms = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let sex = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let mut stages = Vec::with_capacity(config.stages);
        let mut subject_arms = Vec::with_capacity(config.stages);
        for _ in 0..config.stages {
            let tumor = rng.random_range(-1.0..3.0);
            let arm = if rng.random_bool(0.5) { Arm::A } else { Arm::B };
            let eps: f64 = noise.sample(rng);
            let q_a = mean_time(beta, sex, tumor, Arm::A);
            let q_b = mean_time(beta, sex, tumor, Arm::B);
            stages.push(OracleStage {
                sex,
                tumor_size: tumor,
                time_a: q_a + eps,
                time_b: q_b + eps,
                q_a,
                q_b,
                decision: if q_a > q_b { Arm::A } else { Arm::B },
            });
            subject_arms.push(arm);
        }
        oracle.push(stages);
        arms.push(subject_arms);
    }
    let censor_u: Vec<f64> = (0..config.n).map(|_| rng.random::<f64>()).collect();

    let realised = |o: &OracleStage, arm: Arm| match arm {
        Arm::A => o.time_a,
        Arm::B => o.time_b,
    };
    let totals: Vec<f64> = oracle
        .iter()
        .zip(&arms)
        .map(|(stages, a)| stages.iter().zip(a).map(|(o, &arm)| realised(o, arm)).sum())
        .collect();
    let mut sorted = totals.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, config.censor_quantiles.0);
    let hi = quantile_sorted(&sorted, config.censor_quantiles.1);

    let mut observed = Vec::with_capacity(config.n);
    let mut truth = Vec::with_capacity(config.n);
    for (i, (stages, subject_arms)) in oracle.iter().zip(&arms).enumerate() {
        let id = (i + 1).to_string();
        let censor_time = if config.censoring {
            lo + censor_u[i] * (hi - lo)
        } else {
            f64::INFINITY
        };
        let mut remaining = censor_time;
        let mut records = Vec::new();
        let mut true_records = Vec::new();
        let mut following = true;
        for (o, &arm) in stages.iter().zip(subject_arms) {
            let t = realised(o, arm);
            let covariates = vec![Some(o.sex), Some(o.tumor_size)];
            true_records.push(StageRecord {
                covariates: covariates.clone(),
                treatment: arm,
                time: t,
                event: true,
            });
            if !following {
                continue;
            }
            let budget = if config.literal_stagewise_censoring {
                censor_time
            } else {
                remaining
            };
            let event = t <= budget;
            records.push(StageRecord {
                covariates,
                treatment: arm,
                time: if event { t } else { budget },
                event,
            });
            remaining -= t;
            following = event;
        }
        observed.push(Trajectory {
            id: id.clone(),
            stages: records,
        });
        truth.push(Trajectory {
            id,
            stages: true_records,
        });
    }

    SimulatedCohort {
        observed: Cohort::new(names.clone(), observed),
        truth: Cohort::new(names, truth),
        oracle,
    }
}
