//! Product-limit estimation and Buckley-James imputation for one stage.

mod bj;
mod km;

pub use bj::{bj_fit, bj_impute, bj_step, estimating_function, BJConfig, BJFit, StageSample};
pub use km::{conditional_mean_above, km_estimate, KMCurve, TailMeans};
