//! Cox proportional hazards with Breslow ties and a Breslow baseline hazard.
//!
//! Used as the comparison imputer: a fitted model turns each covariate row
//! into a restricted mean survival time by integrating the step survival
//! function exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, rcond_equilibrated, RCOND_THRESHOLD};

/// Relative size of log-likelihood differences treated as rounding error.
pub const ROUNDING_SLACK: f64 = 32.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxConfig {
    pub max_iter: usize,
    /// Sup-norm tolerance on the score.
    pub tol: f64,
    /// A coefficient beyond this magnitude is reported as separation.
    pub max_abs_beta: f64,
    pub max_halvings: usize,
}

impl Default for CoxConfig {
    fn default() -> Self {
        CoxConfig {
            max_iter: 50,
            tol: 1e-8,
            max_abs_beta: 50.0,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoxFit {
    pub beta: DVector<f64>,
    pub column_names: Vec<String>,
    /// Distinct event times, increasing.
    pub baseline_times: Vec<f64>,
    /// Breslow cumulative baseline hazard at each of `baseline_times`.
    pub baseline_cum_hazard: Vec<f64>,
    /// Largest observed time; the integration horizon for expected survival.
    pub max_time: f64,
    pub log_likelihood: f64,
    /// Log partial likelihood after each accepted Newton step, starting at beta = 0.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl CoxFit {
    pub fn cum_baseline_hazard(&self, t: f64) -> f64 {
        let idx = self.baseline_times.partition_point(|&u| u <= t);
        if idx == 0 {
            0.0
        } else {
            self.baseline_cum_hazard[idx - 1]
        }
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter().zip(self.beta.iter()).map(|(x, b)| x * b).sum()
    }
}

/// Value, score and observed information of the Breslow log partial likelihood.
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub information: DMatrix<f64>,
}

fn check_inputs(times: &[f64], events: &[bool], x: &DMatrix<f64>) -> Result<()> {
    let n = times.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if events.len() != n || x.nrows() != n {
        return Err(Error::InvalidArgument(format!(
            "{n} times, {} event flags, {} covariate rows",
            events.len(),
            x.nrows()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite time or covariate".into(),
        ));
    }
    if !events.iter().any(|&d| d) {
        return Err(Error::NoEvents("Cox model needs at least one event".into()));
    }
    Ok(())
}

/// Subjects ordered by decreasing time, grouped by tied times.
fn risk_groups(times: &[f64]) -> (Vec<usize>, Vec<std::ops::Range<usize>>) {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let t = times[order[start]];
        let mut end = start + 1;
        while end < order.len() && times[order[end]] == t {
            end += 1;
        }
        groups.push(start..end);
        start = end;
    }
    (order, groups)
}

pub fn log_partial_likelihood(
    times: &[f64],
    events: &[bool],
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
) -> PartialLikelihood {
    let p = x.ncols();
    let eta = x * beta;
    let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (order, groups) = risk_groups(times);

    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut value = 0.0;
    let mut gradient = DVector::zeros(p);
    let mut information = DMatrix::zeros(p, p);

    for g in groups {
        for &i in &order[g.clone()] {
            let w = (eta[i] - shift).exp();
            let xi = x.row(i).transpose();
            s0 += w;
            s1.axpy(w, &xi, 1.0);
            s2.ger(w, &xi, &xi, 1.0);
        }
        let deaths: Vec<usize> = order[g].iter().copied().filter(|&i| events[i]).collect();
        if deaths.is_empty() {
            continue;
        }
        let mean = &s1 / s0;
        let d = deaths.len() as f64;
        for &i in &deaths {
            value += eta[i];
            gradient += x.row(i).transpose();
        }
        value -= d * (s0.ln() + shift);
        gradient.axpy(-d, &mean, 1.0);
        information += (&s2 / s0 - &mean * mean.transpose()) * d;
    }
    PartialLikelihood {
        value,
        gradient,
        information,
    }
}

fn breslow(
    times: &[f64],
    events: &[bool],
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let eta = x * beta;
    let (order, groups) = risk_groups(times);
    let mut at_risk = 0.0;
    let mut increments = Vec::new();
    for g in groups {
        let t = times[order[g.start]];
        let mut deaths = 0usize;
        for &i in &order[g] {
            at_risk += eta[i].exp();
            deaths += events[i] as usize;
        }
        if deaths > 0 {
            increments.push((t, deaths as f64 / at_risk));
        }
    }
    increments.reverse();
    let mut cum = 0.0;
    increments
        .into_iter()
        .map(|(t, h)| {
            cum += h;
            (t, cum)
        })
        .unzip()
}

fn rank_deficient(info: &DMatrix<f64>, names: &[String]) -> Error {
    let mut cols = linalg::dependent_columns(info);
    if cols.is_empty() {
        cols = (0..info.nrows()).collect();
    }
    Error::RankDeficient {
        columns: cols.into_iter().map(|j| names[j].clone()).collect(),
    }
}

/// Newton-Raphson maximisation of the Breslow log partial likelihood from
/// beta = 0, with step halving whenever a full step lowers the likelihood.
///
/// `covariates` must not contain an intercept column.
pub fn cox_fit(
    times: &[f64],
    events: &[bool],
    covariates: &DMatrix<f64>,
    column_names: &[String],
    config: &CoxConfig,
) -> Result<CoxFit> {
    check_inputs(times, events, covariates)?;
    let p = covariates.ncols();
    if column_names.len() != p {
        return Err(Error::InvalidArgument(
            "one name per covariate column".into(),
        ));
    }

    let mut beta = DVector::zeros(p);
    let mut current = log_partial_likelihood(times, events, covariates, &beta);
    if p > 0 && rcond_equilibrated(&current.information) < RCOND_THRESHOLD {
        return Err(rank_deficient(&current.information, column_names));
    }
    let mut trace = vec![current.value];
    let mut converged = p == 0;
    let mut iterations = 0;

    while !converged && iterations < config.max_iter {
        iterations += 1;
        let step = match current.information.clone().cholesky() {
            Some(chol) => chol.solve(&current.gradient),
            None => {
                let diverging = beta.iter().any(|b| b.abs() > 10.0);
                if diverging {
                    break;
                }
                return Err(rank_deficient(&current.information, column_names));
            }
        };
        let grad_small = current.gradient.amax() < config.tol;
        if grad_small && step.amax() < 1e-6 {
            converged = true;
            break;
        }

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let candidate = &beta + &step * scale;
            let pl = log_partial_likelihood(times, events, covariates, &candidate);
            // Near the optimum the gain drops below the rounding error of the
            // likelihood itself; a step that shrinks the score is then kept.
            let noise = ROUNDING_SLACK * (1.0 + current.value.abs());
            let ascends = pl.value >= current.value
                || (pl.value >= current.value - noise
                    && pl.gradient.amax() < current.gradient.amax());
            if pl.value.is_finite() && ascends {
                accepted = Some((candidate, pl));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, pl)) = accepted else {
            // No ascent available at working precision.
            converged = grad_small;
            break;
        };
        beta = next;
        current = pl;
        trace.push(current.value);

        if let Some(j) = (0..p).find(|&j| beta[j].abs() > config.max_abs_beta) {
            return Err(Error::Separation {
                column: column_names[j].clone(),
                value: beta[j],
            });
        }
    }

    if !converged {
        // Monotone likelihood: the coefficient keeps growing while the score vanishes.
        if let Some(j) = (0..p).max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs())) {
            if beta[j].abs() > 10.0 {
                return Err(Error::Separation {
                    column: column_names[j].clone(),
                    value: beta[j],
                });
            }
        }
        log::debug!("Cox fit did not converge after {iterations} iterations");
    }

    let (baseline_times, baseline_cum_hazard) = breslow(times, events, covariates, &beta);
    let max_time = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(CoxFit {
        beta,
        column_names: column_names.to_vec(),
        baseline_times,
        baseline_cum_hazard,
        max_time,
        log_likelihood: current.value,
        log_likelihood_trace: trace,
        iterations,
        converged,
    })
}

/// Restricted mean survival `int_0^{t_max} exp(-Lambda0(t) exp(beta.x)) dt`,
/// summed exactly over the pieces of the step survival function.
pub fn cox_expected_survival(fit: &CoxFit, covariate_row: &[f64]) -> f64 {
    assert_eq!(
        covariate_row.len(),
        fit.beta.len(),
        "covariate row length must match the coefficients"
    );
    let risk = fit.linear_predictor(covariate_row).exp();
    let horizon = fit.max_time;
    let mut area = 0.0;
    let mut left = 0.0_f64;
    let mut surv = 1.0;
    for (&t, &h) in fit.baseline_times.iter().zip(&fit.baseline_cum_hazard) {
        let right = t.min(horizon).max(0.0);
        if right > left {
            area += surv * (right - left);
            left = right;
        }
        surv = (-h * risk).exp();
    }
    if horizon > left {
        area += surv * (horizon - left);
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn breslow_is_nelson_aalen_at_zero() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true, false, true, false];
        let x = DMatrix::from_row_slice(4, 1, &[0.5, -1.0, 2.0, 0.0]);
        let (t, h) = breslow(&times, &events, &x, &DVector::zeros(1));
        assert_eq!(t, vec![1.0, 3.0]);
        assert_abs_diff_eq!(h[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(h[1], 0.25 + 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rectangle_integral_for_single_event() {
        let fit = CoxFit {
            beta: DVector::from_vec(vec![0.0]),
            column_names: vec!["x".into()],
            baseline_times: vec![2.0],
            baseline_cum_hazard: vec![f64::INFINITY],
            max_time: 5.0,
            log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
            converged: true,
        };
        assert_eq!(cox_expected_survival(&fit, &[0.3]), 2.0);
    }

    #[test]
    fn huge_risk_collapses_to_first_event() {
        let fit = CoxFit {
            beta: DVector::from_vec(vec![1.0]),
            column_names: vec!["x".into()],
            baseline_times: vec![1.5, 3.0],
            baseline_cum_hazard: vec![0.2, 0.6],
            max_time: 4.0,
            log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
            converged: true,
        };
        let v = cox_expected_survival(&fit, &[60.0]);
        assert_abs_diff_eq!(v, 1.5, epsilon = 1e-12);
        let low = cox_expected_survival(&fit, &[-60.0]);
        assert_abs_diff_eq!(low, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_covariate_is_rank_deficient() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true, true, false, true];
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            cox_fit(&times, &events, &x, &names, &CoxConfig::default()),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn perfect_separation_is_reported() {
        // Every treated subject fails before every control subject.
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let events = [true; 6];
        let x = DMatrix::from_row_slice(6, 1, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let err = cox_fit(
            &times,
            &events,
            &x,
            &["trt".to_string()],
            &CoxConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err:?}");
    }

    #[test]
    fn needs_an_event() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            cox_fit(
                &[1.0, 2.0],
                &[false, false],
                &x,
                &["x".into()],
                &CoxConfig::default()
            ),
            Err(Error::NoEvents(_))
        ));
    }
}
