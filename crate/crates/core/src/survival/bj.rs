use nalgebra::{DMatrix, DVector};

use super::km::{km_estimate, KMCurve, TailMeans};
use crate::error::{Error, Result};
use crate::linalg::{self, max_abs_diff, rcond_equilibrated, RCOND_THRESHOLD};

/// Design rows, observed times and event flags for the subjects entering one stage.
#[derive(Debug, Clone)]
pub struct StageSample {
    pub design: DMatrix<f64>,
    pub observed_times: Vec<f64>,
    pub event_flags: Vec<bool>,
    pub column_names: Vec<String>,
}

impl StageSample {
    pub fn new(
        design: DMatrix<f64>,
        observed_times: Vec<f64>,
        event_flags: Vec<bool>,
    ) -> Result<Self> {
        let names = (0..design.ncols()).map(|j| format!("column {j}")).collect();
        Self::with_names(design, observed_times, event_flags, names)
    }

    pub fn with_names(
        design: DMatrix<f64>,
        observed_times: Vec<f64>,
        event_flags: Vec<bool>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = design.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("stage sample has no rows".into()));
        }
        if observed_times.len() != n || event_flags.len() != n {
            return Err(Error::InvalidArgument(format!(
                "design has {n} rows, times {}, flags {}",
                observed_times.len(),
                event_flags.len()
            )));
        }
        if column_names.len() != design.ncols() {
            return Err(Error::InvalidArgument(
                "one column name per design column".into(),
            ));
        }
        if observed_times.iter().any(|t| !t.is_finite()) || design.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite time or design entry".into(),
            ));
        }
        if !event_flags.iter().any(|&d| d) {
            return Err(Error::NoEvents(
                "stage sample has no uncensored rows".into(),
            ));
        }
        Ok(StageSample {
            design,
            observed_times,
            event_flags,
            column_names,
        })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.design.ncols()
    }

    pub fn n_events(&self) -> usize {
        self.event_flags.iter().filter(|&&d| d).count()
    }

    fn residuals(&self, fitted: &DVector<f64>) -> Vec<f64> {
        self.observed_times
            .iter()
            .zip(fitted.iter())
            .map(|(y, f)| y - f)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BJConfig {
    /// Sup-norm tolerance on successive coefficient vectors.
    pub tol: f64,
    pub max_iter: usize,
    pub tail_correction: bool,
}

impl Default for BJConfig {
    fn default() -> Self {
        BJConfig {
            tol: 1e-6,
            max_iter: 100,
            tail_correction: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BJFit {
    pub beta: DVector<f64>,
    /// Product-limit estimate of the residual distribution at `beta`.
    pub residual_km: KMCurve,
    pub iterations: usize,
    pub converged: bool,
    pub oscillation_detected: bool,
}

/// Buckley-James imputed outcomes at coefficient vector `beta`.
///
/// Uncensored rows keep their observed time. A censored row is replaced by
/// its fitted value plus the mean of the residual distribution above its own
/// residual.
pub fn bj_impute(
    sample: &StageSample,
    beta: &DVector<f64>,
    tail_correction: bool,
) -> Result<Vec<f64>> {
    if beta.len() != sample.n_columns() {
        return Err(Error::InvalidArgument(format!(
            "beta has {} entries, design has {} columns",
            beta.len(),
            sample.n_columns()
        )));
    }
    let fitted = &sample.design * beta;
    let residuals = sample.residuals(&fitted);
    let km = km_estimate(&residuals, &sample.event_flags, tail_correction)?;
    let tail = TailMeans::new(&km);
    Ok(sample
        .observed_times
        .iter()
        .zip(&sample.event_flags)
        .zip(residuals.iter().zip(fitted.iter()))
        .map(|((&y, &event), (&e, &f))| if event { y } else { tail.above(e) + f })
        .collect())
}

/// Centered least-squares system shared by every iteration of one fit.
struct CenteredSystem {
    intercept: Option<usize>,
    slopes: Vec<usize>,
    means: Vec<f64>,
    centered: DMatrix<f64>,
    gram_factor: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    p: usize,
}

impl CenteredSystem {
    fn new(sample: &StageSample) -> Result<Self> {
        let x = &sample.design;
        let (n, p) = x.shape();
        let intercept = (0..p).find(|&j| x.column(j).iter().all(|&v| v == 1.0));
        let slopes: Vec<usize> = (0..p).filter(|&j| Some(j) != intercept).collect();
        let means: Vec<f64> = slopes.iter().map(|&j| x.column(j).mean()).collect();
        let centered = DMatrix::from_fn(n, slopes.len(), |i, s| x[(i, slopes[s])] - means[s]);
        let gram_factor = if slopes.is_empty() {
            None
        } else {
            let gram = centered.transpose() * &centered;
            if rcond_equilibrated(&gram) < RCOND_THRESHOLD {
                let names: Vec<String> = slopes
                    .iter()
                    .map(|&j| sample.column_names[j].clone())
                    .collect();
                let mut bad = linalg::dependent_columns(&gram);
                if bad.is_empty() {
                    bad = (0..slopes.len()).collect();
                }
                return Err(Error::RankDeficient {
                    columns: bad.into_iter().map(|s| names[s].clone()).collect(),
                });
            }
            Some(gram.cholesky().ok_or_else(|| {
                Error::RankDeficient {
                    columns: slopes
                        .iter()
                        .map(|&j| sample.column_names[j].clone())
                        .collect(),
                }
            })?)
        };
        Ok(CenteredSystem {
            intercept,
            slopes,
            means,
            centered,
            gram_factor,
            p,
        })
    }

    fn solve(&self, outcomes: &[f64]) -> DVector<f64> {
        let y_mean = outcomes.iter().sum::<f64>() / outcomes.len() as f64;
        let y_centered =
            DVector::from_iterator(outcomes.len(), outcomes.iter().map(|y| y - y_mean));
        let mut beta = DVector::zeros(self.p);
        let mut offset = 0.0;
        if let Some(chol) = &self.gram_factor {
            let slopes = chol.solve(&(self.centered.transpose() * y_centered));
            for (s, &j) in self.slopes.iter().enumerate() {
                beta[j] = slopes[s];
                offset += self.means[s] * slopes[s];
            }
        }
        if let Some(j) = self.intercept {
            beta[j] = y_mean - offset;
        }
        beta
    }
}

/// One application of the closed-form Buckley-James update: least squares of
/// the outcomes imputed at `b` on the centered design. The intercept (a
/// column of ones, when present) is recovered from the means.
pub fn bj_step(
    sample: &StageSample,
    b: &DVector<f64>,
    tail_correction: bool,
) -> Result<DVector<f64>> {
    let system = CenteredSystem::new(sample)?;
    let imputed = bj_impute(sample, b, tail_correction)?;
    Ok(system.solve(&imputed))
}

/// Modified least-squares estimating function
/// `sum_i (H_i - mean H) (Yhat_i(b) - H_i beta)`.
pub fn estimating_function(
    sample: &StageSample,
    beta: &DVector<f64>,
    b: &DVector<f64>,
    tail_correction: bool,
) -> Result<DVector<f64>> {
    let imputed = bj_impute(sample, b, tail_correction)?;
    let fitted = &sample.design * beta;
    let x = &sample.design;
    let (n, p) = x.shape();
    let mut out = DVector::zeros(p);
    for j in 0..p {
        let mean = x.column(j).mean();
        out[j] = (0..n)
            .map(|i| (x[(i, j)] - mean) * (imputed[i] - fitted[i]))
            .sum();
    }
    Ok(out)
}

/// Iterates [`bj_step`] from the least-squares fit on uncensored rows.
///
/// Stops when successive coefficient vectors agree to `config.tol` in
/// sup-norm. A 2-cycle (`beta_l` within `tol` of `beta_{l-2}`) ends the
/// iteration with the average of the two cycle points.
pub fn bj_fit(sample: &StageSample, config: &BJConfig) -> Result<BJFit> {
    let p = sample.n_columns();
    let uncensored: Vec<usize> = (0..sample.n()).filter(|&i| sample.event_flags[i]).collect();
    if uncensored.len() < p {
        return Err(Error::NoEvents(format!(
            "{} uncensored rows for {p} design columns",
            uncensored.len()
        )));
    }
    let x0 = sample.design.select_rows(&uncensored);
    let y0 = DVector::from_iterator(
        uncensored.len(),
        uncensored.iter().map(|&i| sample.observed_times[i]),
    );
    let start = linalg::ols(&x0, &y0, Some(&sample.column_names))?;
    let system = CenteredSystem::new(sample)?;

    let mut prev = start;
    let mut prev2: Option<DVector<f64>> = None;
    let mut beta = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut oscillation_detected = false;
    for l in 1..=config.max_iter {
        iterations = l;
        let next = system.solve(&bj_impute(sample, &prev, config.tail_correction)?);
        if max_abs_diff(&next, &prev) < config.tol {
            beta = Some(next);
            converged = true;
            break;
        }
        if let Some(two_back) = &prev2 {
            if max_abs_diff(&next, two_back) < config.tol {
                beta = Some((&next + &prev) * 0.5);
                oscillation_detected = true;
                break;
            }
        }
        prev2 = Some(std::mem::replace(&mut prev, next));
    }
    let beta = beta.unwrap_or(prev);
    if !converged {
        log::debug!(
            "Buckley-James iteration stopped after {iterations} steps (oscillation: {oscillation_detected})"
        );
    }
    let fitted = &sample.design * &beta;
    let residual_km = km_estimate(
        &sample.residuals(&fitted),
        &sample.event_flags,
        config.tail_correction,
    )?;
    Ok(BJFit {
        beta,
        residual_km,
        iterations,
        converged,
        oscillation_detected,
    })
}
