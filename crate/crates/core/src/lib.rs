//! Buckley-James Q-learning for right-censored longitudinal survival data.
//!
//! The crate is organised bottom-up:
//!
//! - [`survival`]: product-limit estimation over regression residuals and the
//!   Buckley-James imputation / coefficient iteration for a single stage.
//! - [`cox`]: Cox proportional hazards fitting with a Breslow baseline, used as
//!   the comparison imputer.
//! - [`qlearning`]: backward-induction Q-function estimation and counterfactual
//!   treatment decisions.
//! - [`simulation`]: synthetic cohorts with known optimal regimes and the
//!   replicated accuracy experiment.
//! - [`io`]: long-format CSV ingestion and plot/table exports.

pub mod cohort;
pub mod cox;
pub mod error;
pub mod io;
pub mod linalg;
pub mod qlearning;
pub mod simulation;
pub mod survival;

pub use cohort::{Arm, Cohort, StageRecord, Trajectory};
pub use cox::{cox_expected_survival, cox_fit, CoxConfig, CoxFit};
pub use error::{Error, Result};
pub use qlearning::{
    build_design, decide, fit_final_stage, fit_policy, fit_stage, pseudo_outcomes,
    recommend_sequence, FitMethod, Imputer, Policy, PolicyFit, StageFit, StageQModel, Term,
    TermSpec,
};
pub use simulation::{
    generate_cohort, run_experiment, AccuracySummary, ExperimentOutput, Method, Scope, SimConfig,
};
pub use survival::{
    bj_fit, bj_impute, bj_step, conditional_mean_above, km_estimate, BJConfig, BJFit, KMCurve,
    StageSample,
};
