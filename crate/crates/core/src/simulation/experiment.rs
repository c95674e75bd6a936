use rayon::prelude::*;

use super::{
    apply_missingness, generate_cohort, pmm_impute, replicate_rng, AccuracySummary, Method,
    PmmOptions, Scope, SimConfig, SimulatedCohort, TUMOR_SIZE,
};
use crate::cohort::Arm;
use crate::error::{Error, Result};
use crate::qlearning::{fit_policy, recommend_sequence, stage_q_values, Policy};

const STREAM_COHORT: u64 = 0;
const STREAM_MASK: u64 = 1;
const STREAM_PMM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateAccuracy {
    pub replicate: usize,
    pub method: Method,
    pub scope: Scope,
    pub accuracy: f64,
}

/// One per-subject Q-value for box-plot exports. `arms` is a single arm for
/// stage scopes and the whole sequence (e.g. `AB`) for the cumulative scope.
#[derive(Debug, Clone, PartialEq)]
pub struct QValueRow {
    pub replicate: usize,
    pub subject: usize,
    pub scope: Scope,
    pub arms: String,
    pub method: Method,
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub accuracies: Vec<ReplicateAccuracy>,
    pub qvalues: Vec<QValueRow>,
    pub censoring_fraction: f64,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub n: usize,
    pub stages: usize,
    pub summaries: Vec<AccuracySummary>,
    /// Successful replicates only, ordered by replicate then method then scope.
    pub accuracies: Vec<ReplicateAccuracy>,
    pub qvalues: Vec<QValueRow>,
    /// `(replicate, error message)` for excluded replicates.
    pub failures: Vec<(usize, String)>,
    pub mean_censoring_fraction: f64,
    pub mean_missing_fraction: f64,
}

impl ExperimentOutput {
    pub fn summary(&self, method: Method, scope: Scope) -> Option<&AccuracySummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.scope == scope)
    }
}

fn scopes(stages: usize) -> Vec<Scope> {
    let mut v: Vec<Scope> = (1..=stages).map(Scope::Stage).collect();
    if stages > 1 {
        v.push(Scope::Cumulative);
    }
    v
}

fn sequence_label(code: usize, k: usize) -> String {
    (0..k)
        .map(|s| if code >> s & 1 == 1 { 'A' } else { 'B' })
        .collect()
}

fn push_q_rows(
    rows: &mut Vec<QValueRow>,
    replicate: usize,
    subject: usize,
    method: Method,
    per_stage: &[(f64, f64)],
) {
    for (s, &(qa, qb)) in per_stage.iter().enumerate() {
        for (arm, q) in [(Arm::A, qa), (Arm::B, qb)] {
            rows.push(QValueRow {
                replicate,
                subject,
                scope: Scope::Stage(s + 1),
                arms: arm.to_string(),
                method,
                q,
            });
        }
    }
    let k = per_stage.len();
    if k > 1 {
        for code in 0..(1usize << k) {
            let q = (0..k)
                .map(|s| {
                    if code >> s & 1 == 1 {
                        per_stage[s].0
                    } else {
                        per_stage[s].1
                    }
                })
                .sum();
            rows.push(QValueRow {
                replicate,
                subject,
                scope: Scope::Cumulative,
                arms: sequence_label(code, k),
                method,
                q,
            });
        }
    }
}

fn evaluate(
    policy: &Policy,
    sim: &SimulatedCohort,
    method: Method,
    replicate: usize,
    export: Option<&mut Vec<QValueRow>>,
) -> Result<Vec<ReplicateAccuracy>> {
    let k = policy.n_stages();
    let n = sim.truth.trajectories.len();
    let mut stage_hits = vec![0usize; k];
    let mut all_hits = 0usize;
    let mut rows = Vec::new();
    for (i, traj) in sim.truth.trajectories.iter().enumerate() {
        let seq = recommend_sequence(policy, &sim.truth, traj)?;
        let mut all = true;
        for (s, arm) in seq.iter().enumerate() {
            if *arm == sim.oracle[i][s].decision {
                stage_hits[s] += 1;
            } else {
                all = false;
            }
        }
        all_hits += all as usize;
        if export.is_some() {
            let q = stage_q_values(policy, &sim.truth, traj)?;
            push_q_rows(&mut rows, replicate, i + 1, method, &q);
        }
    }
    if let Some(out) = export {
        out.extend(rows);
    }
    Ok(scopes(k)
        .into_iter()
        .map(|scope| {
            let hits = match scope {
                Scope::Stage(s) => stage_hits[s - 1],
                Scope::Cumulative => all_hits,
            };
            ReplicateAccuracy {
                replicate,
                method,
                scope,
                accuracy: hits as f64 / n as f64,
            }
        })
        .collect())
}

/// Generate, mask, impute, fit both methods and score their decisions
/// against the oracle for replicate `replicate`.
pub fn run_replicate(config: &SimConfig, replicate: usize) -> Result<ReplicateOutcome> {
    let r = replicate as u64;
    let sim = generate_cohort(config, &mut replicate_rng(config.seed, r, STREAM_COHORT));
    let masked = apply_missingness(
        &sim.observed,
        config,
        &mut replicate_rng(config.seed, r, STREAM_MASK),
    )?;
    let tumor = masked.covariate_index(TUMOR_SIZE)?;
    let n_records: usize = masked.trajectories.iter().map(|t| t.stages.len()).sum();
    let n_missing = masked.missing_count(tumor);
    let completed = if n_missing > 0 {
        pmm_impute(
            &masked,
            TUMOR_SIZE,
            PmmOptions {
                donors: config.pmm_donors,
                stratify_by_arm: config.pmm_stratify_by_arm,
            },
            &mut replicate_rng(config.seed, r, STREAM_PMM),
        )?
    } else {
        masked
    };

    let terms = config.q_terms();
    let exporting = replicate == config.export_replicate;
    let mut qvalues = Vec::new();
    if exporting {
        for (i, stages) in sim.oracle.iter().enumerate() {
            let q: Vec<(f64, f64)> = stages.iter().map(|o| (o.q_a, o.q_b)).collect();
            push_q_rows(&mut qvalues, replicate, i + 1, Method::Truth, &q);
        }
    }
    let mut accuracies = Vec::new();
    for method in [Method::BjQ, Method::CoxQ] {
        let fit = fit_policy(&completed, config.stages, &terms, &config.imputer(method))?;
        accuracies.extend(evaluate(
            &fit.policy,
            &sim,
            method,
            replicate,
            exporting.then_some(&mut qvalues),
        )?);
    }
    Ok(ReplicateOutcome {
        replicate,
        accuracies,
        qvalues,
        censoring_fraction: sim.censoring_fraction(),
        missing_fraction: n_missing as f64 / n_records.max(1) as f64,
    })
}

/// Runs all replicates (in parallel) and aggregates them in replicate order.
///
/// Failed replicates are excluded and listed; more than 10% failures is an error.
pub fn run_experiment(config: &SimConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let results: Vec<Result<ReplicateOutcome>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect();

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    if failures.len() * 10 > config.replicates {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: config.replicates,
        });
    }

    let mut summaries = Vec::new();
    for method in [Method::BjQ, Method::CoxQ] {
        for scope in scopes(config.stages) {
            let values: Vec<f64> = outcomes
                .iter()
                .flat_map(|o| &o.accuracies)
                .filter(|a| a.method == method && a.scope == scope)
                .map(|a| a.accuracy)
                .collect();
            summaries.push(AccuracySummary::from_values(method, scope, &values));
        }
    }
    let m = outcomes.len() as f64;
    Ok(ExperimentOutput {
        n: config.n,
        stages: config.stages,
        summaries,
        mean_censoring_fraction: outcomes.iter().map(|o| o.censoring_fraction).sum::<f64>() / m,
        mean_missing_fraction: outcomes.iter().map(|o| o.missing_fraction).sum::<f64>() / m,
        accuracies: outcomes.iter().flat_map(|o| o.accuracies.clone()).collect(),
        qvalues: outcomes.into_iter().flat_map(|o| o.qvalues).collect(),
        failures,
    })
}
