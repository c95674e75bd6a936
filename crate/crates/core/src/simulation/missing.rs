use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{MissingMechanism, SimConfig, SEX, TUMOR_SIZE};
use crate::cohort::{Arm, Cohort};
use crate::error::{Error, Result};
use crate::linalg;

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logit intercept `c` such that masking with probability
/// `expit(c +/- 0.5)` (plus for sex 1) has average `rate` over `sexes`.
pub fn mar_intercept(rate: f64, sexes: &[f64]) -> f64 {
    let avg = |c: f64| {
        sexes
            .iter()
            .map(|&s| expit(c + if s > 0.5 { 0.5 } else { -0.5 }))
            .sum::<f64>()
            / sexes.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if avg(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Masks tumour size at `config.missing_rate`.
///
/// One uniform is drawn per eligible stage record whatever the rate, so the
/// stream position does not depend on the configuration.
pub fn apply_missingness<R: Rng + ?Sized>(
    cohort: &Cohort,
    config: &SimConfig,
    rng: &mut R,
) -> Result<Cohort> {
    let target = cohort.covariate_index(TUMOR_SIZE)?;
    let sex_idx = cohort.covariate_index(SEX)?;
    let mut out = cohort.clone();
    let max_stage = if config.mask_all_stages {
        usize::MAX
    } else {
        1
    };

    let offset = match config.missing_mechanism {
        MissingMechanism::Mcar => None,
        MissingMechanism::MarOnSex => {
            let sexes: Vec<f64> = out
                .trajectories
                .iter()
                .flat_map(|t| t.stages.iter().take(max_stage))
                .filter_map(|r| r.covariates[sex_idx])
                .collect();
            if sexes.is_empty() || config.missing_rate <= 0.0 || config.missing_rate >= 1.0 {
                None
            } else {
                Some(mar_intercept(config.missing_rate, &sexes))
            }
        }
    };

    for traj in &mut out.trajectories {
        for rec in traj.stages.iter_mut().take(max_stage) {
            let p = match (offset, rec.covariates[sex_idx]) {
                (Some(c), Some(s)) => expit(c + if s > 0.5 { 0.5 } else { -0.5 }),
                _ => config.missing_rate,
            };
            let u: f64 = rng.random();
            if u < p {
                rec.covariates[target] = None;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PmmOptions {
    pub donors: usize,
    /// Separate matching models and donor pools per arm, with a
    /// time-by-event term; otherwise one additive model with a treatment term.
    pub stratify_by_arm: bool,
}

/// Single-imputation predictive mean matching for covariate `target`.
///
/// At each stage the target is regressed on the other fully observed
/// covariates, the observed time and the event flag over complete cases.
/// Each missing value is copied from one of the `donors` complete cases with
/// the nearest predicted mean, chosen uniformly.
pub fn pmm_impute<R: Rng + ?Sized>(
    cohort: &Cohort,
    target: &str,
    options: PmmOptions,
    rng: &mut R,
) -> Result<Cohort> {
    let t_idx = cohort.covariate_index(target)?;
    let mut out = cohort.clone();
    for k in 1..=cohort.n_stages() {
        let entrants = cohort.entrants(k);
        let strata: Vec<Vec<usize>> = if options.stratify_by_arm {
            Arm::BOTH
                .iter()
                .map(|&arm| {
                    entrants
                        .iter()
                        .copied()
                        .filter(|&i| cohort.trajectories[i].stage(k).unwrap().treatment == arm)
                        .collect()
                })
                .collect()
        } else {
            vec![entrants]
        };
        for stratum in strata {
            let imputed = impute_stratum(cohort, k, t_idx, &stratum, options, rng)?;
            for (i, v) in imputed {
                out.trajectories[i].stage_mut(k).unwrap().covariates[t_idx] = Some(v);
            }
        }
    }
    Ok(out)
}

fn impute_stratum<R: Rng + ?Sized>(
    cohort: &Cohort,
    k: usize,
    t_idx: usize,
    subjects: &[usize],
    options: PmmOptions,
    rng: &mut R,
) -> Result<Vec<(usize, f64)>> {
    let rec = |i: usize| cohort.trajectories[i].stage(k).unwrap();
    let (complete, missing): (Vec<usize>, Vec<usize>) = subjects
        .iter()
        .partition(|&&i| rec(i).covariates[t_idx].is_some());
    if missing.is_empty() {
        return Ok(Vec::new());
    }
    if complete.len() < options.donors {
        return Err(Error::InsufficientDonors {
            needed: options.donors,
            available: complete.len(),
        });
    }

    let other: Vec<usize> = (0..cohort.covariate_names.len())
        .filter(|&j| j != t_idx && subjects.iter().all(|&i| rec(i).covariates[j].is_some()))
        .collect();
    let predictors = |i: usize| -> Vec<f64> {
        let r = rec(i);
        let event = if r.event { 1.0 } else { 0.0 };
        let mut row = vec![1.0];
        row.extend(other.iter().map(|&j| r.covariates[j].unwrap()));
        row.push(r.time);
        row.push(event);
        if options.stratify_by_arm {
            row.push(r.time * event);
        } else {
            row.push(r.treatment.indicator());
        }
        row
    };
    let full = DMatrix::from_row_iterator(
        complete.len(),
        predictors(complete[0]).len(),
        complete.iter().flat_map(|&i| predictors(i)),
    );
    let keep: Vec<usize> = {
        let dropped = linalg::dependent_columns(&(full.transpose() * &full));
        (0..full.ncols()).filter(|j| !dropped.contains(j)).collect()
    };
    let x = full.select_columns(&keep);
    let y = DVector::from_iterator(
        complete.len(),
        complete.iter().map(|&i| rec(i).covariates[t_idx].unwrap()),
    );
    let coef = linalg::ols(&x, &y, None)?;
    let predict = |i: usize| -> f64 {
        let row = predictors(i);
        keep.iter().zip(coef.iter()).map(|(&j, b)| row[j] * b).sum()
    };
    let donor_pred: Vec<f64> = complete.iter().map(|&i| predict(i)).collect();

    let mut imputed = Vec::with_capacity(missing.len());
    let mut order: Vec<usize> = (0..complete.len()).collect();
    for &i in &missing {
        let target = predict(i);
        order.sort_by(|&a, &b| {
            (donor_pred[a] - target)
                .abs()
                .total_cmp(&(donor_pred[b] - target).abs())
                .then(a.cmp(&b))
        });
        let pick = order[rng.random_range(0..options.donors)];
        imputed.push((i, y[pick]));
    }
    Ok(imputed)
}
