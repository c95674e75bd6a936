//! Synthetic cohorts with a known optimal regime, and the replicated
//! decision-accuracy experiment comparing Buckley-James and Cox Q-learning.

mod experiment;
mod generate;
mod missing;
mod summary;

pub use experiment::{
    run_experiment, run_replicate, ExperimentOutput, QValueRow, ReplicateAccuracy, ReplicateOutcome,
};
pub use generate::{generate_cohort, OracleStage, SimulatedCohort};
pub use missing::{apply_missingness, mar_intercept, pmm_impute, PmmOptions};
pub use summary::{quantile_sorted, AccuracySummary, Method, Scope};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cox::CoxConfig;
use crate::error::{Error, Result};
use crate::qlearning::{Imputer, TermSpec};
use crate::survival::BJConfig;

pub const SEX: &str = "Sex";
pub const TUMOR_SIZE: &str = "TumorSize";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingMechanism {
    Mcar,
    /// Masking probability depends on sex through a +/-0.5 logit offset.
    MarOnSex,
}

/// Which covariates enter the Cox imputation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoxCovariates {
    /// Sex, tumour size and a treatment main effect.
    Main,
    /// The full Q-function term set without its intercept.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub stages: usize,
    /// Intercept, sex, tumour size, treatment, treatment x tumour size.
    pub coefficients: [f64; 5],
    pub noise_sd: f64,
    /// When false every stage outcome is observed.
    pub censoring: bool,
    /// Censoring times are uniform between these quantiles of total survival.
    pub censor_quantiles: (f64, f64),
    /// Censor every stage against the full censoring time instead of the
    /// time remaining after earlier stages.
    pub literal_stagewise_censoring: bool,
    pub missing_rate: f64,
    pub missing_mechanism: MissingMechanism,
    /// Mask tumour size at every stage (otherwise stage 1 only).
    pub mask_all_stages: bool,
    pub pmm_donors: usize,
    /// Fit the matching model separately within each arm.
    pub pmm_stratify_by_arm: bool,
    pub replicates: usize,
    pub seed: u64,
    pub bj: BJConfig,
    pub cox: CoxConfig,
    pub cox_covariates: CoxCovariates,
    /// Replicate whose per-subject Q-values are exported.
    pub export_replicate: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 500,
            stages: 1,
            coefficients: [10.0, 0.1, -1.0, 0.01, 1.3],
            noise_sd: 1.0,
            censoring: true,
            censor_quantiles: (0.2, 0.8),
            literal_stagewise_censoring: false,
            missing_rate: 0.5,
            missing_mechanism: MissingMechanism::Mcar,
            mask_all_stages: true,
            pmm_donors: 5,
            pmm_stratify_by_arm: true,
            replicates: 50,
            seed: 20250101,
            bj: BJConfig::default(),
            cox: CoxConfig::default(),
            cox_covariates: CoxCovariates::Main,
            export_replicate: 0,
        }
    }
}

impl SimConfig {
    /// Every violated constraint, keyed by field name.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.n < 2 {
            errors.push(format!("n: must be at least 2, got {}", self.n));
        }
        if self.stages == 0 {
            errors.push("stages: must be at least 1".to_string());
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            errors.push("coefficients: must be finite".to_string());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            errors.push(format!(
                "noise_sd: must be finite and >= 0, got {}",
                self.noise_sd
            ));
        }
        let (lo, hi) = self.censor_quantiles;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            errors.push(format!(
                "censor_quantiles: need 0 <= low < high <= 1, got ({lo}, {hi})"
            ));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            errors.push(format!(
                "missing_rate: must lie in [0, 1], got {}",
                self.missing_rate
            ));
        }
        if self.pmm_donors == 0 {
            errors.push("pmm_donors: must be positive".to_string());
        }
        if self.replicates == 0 {
            errors.push("replicates: must be positive".to_string());
        }
        if self.bj.tol.is_nan() || self.bj.tol <= 0.0 {
            errors.push("bj.tol: must be positive".to_string());
        }
        if self.bj.max_iter == 0 {
            errors.push("bj.max_iter: must be positive".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Term set of the estimated Q-functions at every stage.
    pub fn q_terms(&self) -> TermSpec {
        TermSpec::main_effects_with_interaction(&[SEX, TUMOR_SIZE], TUMOR_SIZE)
    }

    pub fn imputer(&self, method: Method) -> Imputer {
        match method {
            Method::CoxQ => {
                let covariates = match self.cox_covariates {
                    CoxCovariates::Main => {
                        TermSpec::parse_cox("Sex + TumorSize + trt").expect("static term set")
                    }
                    CoxCovariates::Full => {
                        self.q_terms().without_intercept().expect("static term set")
                    }
                };
                Imputer::Cox {
                    covariates,
                    config: self.cox,
                }
            }
            _ => Imputer::BuckleyJames(self.bj),
        }
    }
}

/// Independent random stream `stream` of replicate `replicate`.
pub fn replicate_rng(seed: u64, replicate: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(replicate));
    rng.set_stream(stream);
    rng
}
