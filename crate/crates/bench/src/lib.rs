//! Fixtures shared by the benchmarks: realistic single-stage samples drawn
//! from the default simulation scenario.

use bjq_core::simulation::{generate_cohort, replicate_rng, SimConfig};
use bjq_core::{build_design, Cohort, StageSample};
use nalgebra::DMatrix;

/// Censored single-stage cohort of `n` subjects without missing covariates.
pub fn cohort(n: usize, seed: u64) -> Cohort {
    let cfg = SimConfig {
        n,
        missing_rate: 0.0,
        ..SimConfig::default()
    };
    generate_cohort(&cfg, &mut replicate_rng(seed, 0, 0)).observed
}

/// Stage-1 regression sample on the default Q-function terms.
pub fn stage_sample(n: usize, seed: u64) -> StageSample {
    let cohort = cohort(n, seed);
    let terms = SimConfig::default().q_terms();
    let design = build_design(&cohort, 1, &terms, None).expect("default terms resolve");
    let (times, events) = design
        .subjects
        .iter()
        .map(|&i| {
            let r = &cohort.trajectories[i].stages[0];
            (r.time, r.event)
        })
        .unzip();
    StageSample::with_names(design.matrix, times, events, terms.names()).expect("sample has events")
}

/// Inputs for a Cox fit: the stage sample's design without its intercept.
pub fn cox_inputs(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>, DMatrix<f64>, Vec<String>) {
    let s = stage_sample(n, seed);
    let p = s.design.ncols();
    let x = s.design.columns(1, p - 1).into_owned();
    (
        s.observed_times,
        s.event_flags,
        x,
        s.column_names[1..].to_vec(),
    )
}
