//! Backward-induction Q-learning on imputed stage outcomes.
//!
//! Each stage's outcome is first imputed (Buckley-James, or Cox restricted
//! means for the comparison method). The final stage is fit on those
//! imputations directly; earlier stages regress pseudo-outcomes that add
//! the best attainable next-stage Q-value.

mod terms;

use nalgebra::{DMatrix, DVector};

pub use terms::{Term, TermSpec};

use crate::cohort::{Arm, Cohort, Trajectory};
use crate::cox::{cox_expected_survival, cox_fit, CoxConfig, CoxFit};
use crate::error::{Error, Result};
use crate::linalg;
use crate::survival::{bj_fit, bj_impute, BJConfig, BJFit, StageSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FitMethod {
    BuckleyJames,
    Cox,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::BuckleyJames => "bj",
            FitMethod::Cox => "cox",
        }
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bj" | "buckley-james" => Ok(FitMethod::BuckleyJames),
            "cox" => Ok(FitMethod::Cox),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// How censored stage outcomes are turned into complete ones.
#[derive(Debug, Clone)]
pub enum Imputer {
    BuckleyJames(BJConfig),
    /// Restricted mean survival from a Cox model on `covariates`; every
    /// entrant's outcome is replaced by its prediction.
    Cox {
        covariates: TermSpec,
        config: CoxConfig,
    },
}

impl Imputer {
    pub fn method(&self) -> FitMethod {
        match self {
            Imputer::BuckleyJames(_) => FitMethod::BuckleyJames,
            Imputer::Cox { .. } => FitMethod::Cox,
        }
    }
}

/// Stage design with the subject index of each row.
#[derive(Debug, Clone)]
pub struct StageDesign {
    pub subjects: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

/// Design rows for the entrants of stage `k`, using each subject's observed
/// arm unless `treatment_override` substitutes a hypothetical one.
pub fn build_design(
    cohort: &Cohort,
    k: usize,
    terms: &TermSpec,
    treatment_override: Option<Arm>,
) -> Result<StageDesign> {
    let resolved = terms.resolve(cohort)?;
    let subjects = cohort.entrants(k);
    let mut data = Vec::with_capacity(subjects.len() * terms.len());
    for &i in &subjects {
        let traj = &cohort.trajectories[i];
        let rec = traj.stage(k).expect("entrant has a record");
        let arm = treatment_override.unwrap_or(rec.treatment);
        data.extend(resolved.row(rec, arm, &traj.id)?);
    }
    let matrix = DMatrix::from_row_slice(subjects.len(), terms.len(), &data);
    Ok(StageDesign { subjects, matrix })
}

/// Fitted linear Q-function for one stage.
#[derive(Debug, Clone)]
pub struct StageQModel {
    /// 1-based stage index.
    pub stage: usize,
    pub terms: TermSpec,
    pub beta_hat: DVector<f64>,
    pub fit_method: FitMethod,
    pub bj: Option<BJFit>,
    pub cox: Option<CoxFit>,
}

impl StageQModel {
    pub fn q_value(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(self.beta_hat.iter())
            .map(|(x, b)| x * b)
            .sum()
    }

    /// `Q_k(H_k(arm))` for a trajectory entering this model's stage.
    pub fn counterfactual_q(&self, cohort: &Cohort, traj: &Trajectory, arm: Arm) -> Result<f64> {
        let rec = traj.stage(self.stage).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "subject {} did not enter stage {}",
                traj.id, self.stage
            ))
        })?;
        let row = self.terms.resolve(cohort)?.row(rec, arm, &traj.id)?;
        Ok(self.q_value(&row))
    }
}

#[derive(Debug, Clone)]
pub struct Policy {
    /// Models for stages `1..=K`, in order.
    pub stage_models: Vec<StageQModel>,
    pub treatment_labels: [String; 2],
}

impl Policy {
    pub fn n_stages(&self) -> usize {
        self.stage_models.len()
    }

    pub fn model(&self, k: usize) -> &StageQModel {
        &self.stage_models[k - 1]
    }
}

/// One stage of a fitted policy together with the quantities it was fit on.
#[derive(Debug, Clone)]
pub struct StageFit {
    pub model: StageQModel,
    pub subjects: Vec<usize>,
    /// Imputed stage outcome `Yhat_{i,k}` per entrant.
    pub imputed: Vec<f64>,
    /// Regression targets: the imputations at the final stage, pseudo-outcomes before it.
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PolicyFit {
    pub policy: Policy,
    pub stages: Vec<StageFit>,
}

struct StageImputation {
    subjects: Vec<usize>,
    design: DMatrix<f64>,
    imputed: Vec<f64>,
    bj: Option<BJFit>,
    cox: Option<CoxFit>,
}

fn stage_outcomes(cohort: &Cohort, k: usize, subjects: &[usize]) -> (Vec<f64>, Vec<bool>) {
    subjects
        .iter()
        .map(|&i| {
            let r = cohort.trajectories[i].stage(k).expect("entrant");
            (r.time, r.event)
        })
        .unzip()
}

fn impute_stage(
    cohort: &Cohort,
    k: usize,
    terms: &TermSpec,
    imputer: &Imputer,
) -> Result<StageImputation> {
    let design = build_design(cohort, k, terms, None)?;
    if design.subjects.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no subject entered stage {k}"
        )));
    }
    let (times, events) = stage_outcomes(cohort, k, &design.subjects);
    match imputer {
        Imputer::BuckleyJames(config) => {
            let sample =
                StageSample::with_names(design.matrix.clone(), times, events, terms.names())?;
            let fit = bj_fit(&sample, config)?;
            let imputed = bj_impute(&sample, &fit.beta, config.tail_correction)?;
            Ok(StageImputation {
                subjects: design.subjects,
                design: design.matrix,
                imputed,
                bj: Some(fit),
                cox: None,
            })
        }
        Imputer::Cox { covariates, config } => {
            let cox_design = build_design(cohort, k, covariates, None)?;
            let fit = cox_fit(
                &times,
                &events,
                &cox_design.matrix,
                &covariates.names(),
                config,
            )?;
            let imputed = cox_design
                .matrix
                .row_iter()
                .map(|row| {
                    let row: Vec<f64> = row.iter().copied().collect();
                    cox_expected_survival(&fit, &row)
                })
                .collect();
            Ok(StageImputation {
                subjects: design.subjects,
                design: design.matrix,
                imputed,
                bj: None,
                cox: Some(fit),
            })
        }
    }
}

/// Stage-`k_final` model fit on the imputed outcomes.
///
/// For Buckley-James the model is the Buckley-James coefficient vector
/// itself (least squares on its own imputations). For Cox it is least
/// squares of the Cox restricted means on `terms`.
pub fn fit_final_stage(
    cohort: &Cohort,
    k_final: usize,
    terms: &TermSpec,
    imputer: &Imputer,
) -> Result<StageFit> {
    let imp = impute_stage(cohort, k_final, terms, imputer)?;
    let beta_hat = match &imp.bj {
        Some(fit) => fit.beta.clone(),
        None => linalg::ols(
            &imp.design,
            &DVector::from_vec(imp.imputed.clone()),
            Some(&terms.names()),
        )?,
    };
    Ok(StageFit {
        model: StageQModel {
            stage: k_final,
            terms: terms.clone(),
            beta_hat,
            fit_method: imputer.method(),
            bj: imp.bj,
            cox: imp.cox,
        },
        subjects: imp.subjects,
        targets: imp.imputed.clone(),
        imputed: imp.imputed,
    })
}

/// `Yhat_{i,k} + max_a Q_{k+1}(H_{i,k+1}(a))` for the stage-`k` entrants
/// listed in `subjects`; the future term is 0 for subjects that never
/// entered stage `k + 1`.
pub fn pseudo_outcomes(
    cohort: &Cohort,
    subjects: &[usize],
    imputed: &[f64],
    next_model: &StageQModel,
) -> Result<Vec<f64>> {
    if subjects.len() != imputed.len() {
        return Err(Error::InvalidArgument(
            "one imputed outcome per stage entrant".into(),
        ));
    }
    let resolved = next_model.terms.resolve(cohort)?;
    subjects
        .iter()
        .zip(imputed)
        .map(|(&i, &y)| {
            let traj = &cohort.trajectories[i];
            let future = match traj.stage(next_model.stage) {
                None => 0.0,
                Some(rec) => {
                    let qa = next_model.q_value(&resolved.row(rec, Arm::A, &traj.id)?);
                    let qb = next_model.q_value(&resolved.row(rec, Arm::B, &traj.id)?);
                    qa.max(qb)
                }
            };
            Ok(y + future)
        })
        .collect()
}

/// Least squares of `pseudo` on the stage-`k` design of the entrants.
pub fn fit_stage(
    cohort: &Cohort,
    k: usize,
    pseudo: &[f64],
    terms: &TermSpec,
    method: FitMethod,
) -> Result<StageQModel> {
    let design = build_design(cohort, k, terms, None)?;
    if design.subjects.len() != pseudo.len() {
        return Err(Error::InvalidArgument(format!(
            "{} pseudo-outcomes for {} stage-{k} entrants",
            pseudo.len(),
            design.subjects.len()
        )));
    }
    let beta_hat = linalg::ols(
        &design.matrix,
        &DVector::from_column_slice(pseudo),
        Some(&terms.names()),
    )?;
    Ok(StageQModel {
        stage: k,
        terms: terms.clone(),
        beta_hat,
        fit_method: method,
        bj: None,
        cox: None,
    })
}

/// A iff `Q_k(H(A)) > Q_k(H(B))`; ties go to B.
pub fn decide(model: &StageQModel, cohort: &Cohort, traj: &Trajectory) -> Result<Arm> {
    let qa = model.counterfactual_q(cohort, traj, Arm::A)?;
    let qb = model.counterfactual_q(cohort, traj, Arm::B)?;
    Ok(if qa > qb { Arm::A } else { Arm::B })
}

/// Backward fit over stages `k_stages, ..., 1`.
pub fn fit_policy(
    cohort: &Cohort,
    k_stages: usize,
    terms: &TermSpec,
    imputer: &Imputer,
) -> Result<PolicyFit> {
    if k_stages == 0 {
        return Err(Error::InvalidArgument(
            "at least one stage is required".into(),
        ));
    }
    let mut stages = Vec::with_capacity(k_stages);
    stages.push(fit_final_stage(cohort, k_stages, terms, imputer)?);
    for k in (1..k_stages).rev() {
        let imp = impute_stage(cohort, k, terms, imputer)?;
        let next = &stages.last().expect("later stage fitted").model;
        let pseudo = pseudo_outcomes(cohort, &imp.subjects, &imp.imputed, next)?;
        let mut model = fit_stage(cohort, k, &pseudo, terms, imputer.method())?;
        model.bj = imp.bj;
        model.cox = imp.cox;
        stages.push(StageFit {
            model,
            subjects: imp.subjects,
            imputed: imp.imputed,
            targets: pseudo,
        });
    }
    stages.reverse();
    let policy = Policy {
        stage_models: stages.iter().map(|s| s.model.clone()).collect(),
        treatment_labels: cohort.treatment_labels.clone(),
    };
    Ok(PolicyFit { policy, stages })
}

/// Counterfactual Q-values `(Q(A), Q(B))` for every stage the trajectory entered.
pub fn stage_q_values(
    policy: &Policy,
    cohort: &Cohort,
    traj: &Trajectory,
) -> Result<Vec<(f64, f64)>> {
    let stages = traj.stages.len().min(policy.n_stages());
    (1..=stages)
        .map(|k| {
            let m = policy.model(k);
            Ok((
                m.counterfactual_q(cohort, traj, Arm::A)?,
                m.counterfactual_q(cohort, traj, Arm::B)?,
            ))
        })
        .collect()
}

/// Arm sequence maximising the summed stage Q-values, over the stages the
/// trajectory entered. Candidates are enumerated with B before A at every
/// position and only a strictly larger sum replaces the incumbent, so ties
/// resolve to B exactly as in [`decide`].
pub fn recommend_sequence(policy: &Policy, cohort: &Cohort, traj: &Trajectory) -> Result<Vec<Arm>> {
    let q = stage_q_values(policy, cohort, traj)?;
    let k = q.len();
    if k > 20 {
        return Err(Error::InvalidArgument(
            "too many stages to enumerate".into(),
        ));
    }
    let mut best: Option<(f64, u32)> = None;
    for code in 0u32..(1 << k) {
        // Bit s set means arm A at stage s + 1.
        let total: f64 = (0..k)
            .map(|s| if code >> s & 1 == 1 { q[s].0 } else { q[s].1 })
            .sum();
        if best.is_none_or(|(b, _)| total > b) {
            best = Some((total, code));
        }
    }
    let code = best.map(|(_, c)| c).unwrap_or(0);
    let seq: Vec<Arm> = (0..k)
        .map(|s| if code >> s & 1 == 1 { Arm::A } else { Arm::B })
        .collect();
    Ok(seq)
}
