use crate::error::{Error, Result};

/// Product-limit estimate of a distribution function, stored as a
/// right-continuous step function over its jump points.
#[derive(Debug, Clone, PartialEq)]
pub struct KMCurve {
    /// Distinct values carrying positive mass, strictly increasing.
    pub jump_points: Vec<f64>,
    /// `F(u_j)` at each jump point.
    pub cdf_values: Vec<f64>,
    /// Point mass `F(u_j) - F(u_{j-1})`.
    pub mass: Vec<f64>,
}

impl KMCurve {
    /// `F(u)`; zero below the first jump.
    pub fn cdf(&self, u: f64) -> f64 {
        let idx = self.jump_points.partition_point(|&p| p <= u);
        if idx == 0 {
            0.0
        } else {
            self.cdf_values[idx - 1]
        }
    }

    pub fn survival(&self, u: f64) -> f64 {
        1.0 - self.cdf(u)
    }

    pub fn total_mass(&self) -> f64 {
        self.cdf_values.last().copied().unwrap_or(0.0)
    }

    pub fn largest_jump(&self) -> f64 {
        *self
            .jump_points
            .last()
            .expect("a KM curve always has at least one jump")
    }
}

/// Kaplan-Meier estimate of the distribution of `values` under right
/// censoring (`events[i] == false` means censored at `values[i]`).
///
/// At tied values events are processed before censorings, so censored
/// observations at a tie stay in the risk set of the events there. With
/// `tail_correction`, censored observations at the largest value are
/// treated as events so the estimate reaches 1.
pub fn km_estimate(values: &[f64], events: &[bool], tail_correction: bool) -> Result<KMCurve> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if values.len() != events.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values but {} event flags",
            values.len(),
            events.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value".into()));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents("every observation is censored".into()));
    }

    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let max_value = values[order[n - 1]];

    let mut jump_points = Vec::new();
    let mut cdf_values = Vec::new();
    let mut mass = Vec::new();
    let mut surv = 1.0_f64;
    let mut start = 0;
    while start < n {
        let v = values[order[start]];
        let mut end = start;
        let mut deaths = 0usize;
        while end < n && values[order[end]] == v {
            if events[order[end]] || (tail_correction && v == max_value) {
                deaths += 1;
            }
            end += 1;
        }
        if deaths > 0 {
            let at_risk = (n - start) as f64;
            let next = surv * (1.0 - deaths as f64 / at_risk);
            jump_points.push(v);
            mass.push(surv - next);
            cdf_values.push(1.0 - next);
            surv = next;
        }
        start = end;
    }

    Ok(KMCurve {
        jump_points,
        cdf_values,
        mass,
    })
}

/// Mean of the estimated distribution restricted to values strictly above
/// `e`; the largest jump point when no mass lies above `e`.
pub fn conditional_mean_above(km: &KMCurve, e: f64) -> f64 {
    let (num, den) = km
        .jump_points
        .iter()
        .zip(&km.mass)
        .filter(|(&u, _)| u > e)
        .fold((0.0, 0.0), |(n, d), (&u, &m)| (n + u * m, d + m));
    if den > 0.0 {
        num / den
    } else {
        km.largest_jump()
    }
}

/// Suffix sums over a [`KMCurve`] for repeated conditional-mean queries.
#[derive(Debug, Clone)]
pub struct TailMeans<'a> {
    km: &'a KMCurve,
    weighted: Vec<f64>,
    mass: Vec<f64>,
}

impl<'a> TailMeans<'a> {
    pub fn new(km: &'a KMCurve) -> Self {
        let m = km.jump_points.len();
        let mut weighted = vec![0.0; m + 1];
        let mut mass = vec![0.0; m + 1];
        for j in (0..m).rev() {
            weighted[j] = weighted[j + 1] + km.jump_points[j] * km.mass[j];
            mass[j] = mass[j + 1] + km.mass[j];
        }
        TailMeans { km, weighted, mass }
    }

    /// Same value as [`conditional_mean_above`], in `O(log m)`.
    pub fn above(&self, e: f64) -> f64 {
        let idx = self.km.jump_points.partition_point(|&u| u <= e);
        if self.mass[idx] > 0.0 {
            self.weighted[idx] / self.mass[idx]
        } else {
            self.km.largest_jump()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn all_events_uniform_steps() {
        let km = km_estimate(&[1.0, 2.0, 3.0], &[true, true, true], false).unwrap();
        assert_eq!(km.jump_points, vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(km.cdf_values[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.cdf_values[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.cdf_values[2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn censored_middle_moves_mass_to_the_right() {
        let km = km_estimate(&[1.0, 2.0, 3.0], &[true, false, true], false).unwrap();
        assert_eq!(km.jump_points, vec![1.0, 3.0]);
        assert_abs_diff_eq!(km.cdf(1.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.cdf(2.5), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.cdf(3.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.mass[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn single_event_carries_all_mass() {
        let km = km_estimate(&[0.0], &[true], false).unwrap();
        assert_eq!(km.cdf(0.0), 1.0);
        assert_eq!(km.cdf(-1e-9), 0.0);
        assert_eq!(km.cdf(100.0), 1.0);
    }

    #[test]
    fn tail_correction_closes_the_distribution() {
        let open = km_estimate(&[1.0, 2.0, 3.0], &[true, true, false], false).unwrap();
        assert_abs_diff_eq!(open.total_mass(), 2.0 / 3.0, epsilon = 1e-15);
        let closed = km_estimate(&[1.0, 2.0, 3.0], &[true, true, false], true).unwrap();
        assert_eq!(closed.jump_points, vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(closed.total_mass(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ties_put_events_before_censorings() {
        // At 2: one event and one censoring, both at risk.
        let km = km_estimate(&[1.0, 2.0, 2.0, 3.0], &[true, true, false, true], false).unwrap();
        // S(1)=3/4, S(2)=3/4*(1-1/3)=1/2, S(3)=0
        assert_abs_diff_eq!(km.cdf(2.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(km.cdf(3.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            km_estimate(&[], &[], true),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            km_estimate(&[1.0, 2.0], &[false, false], true),
            Err(Error::NoEvents(_))
        ));
        assert!(matches!(
            km_estimate(&[f64::NAN], &[true], true),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn conditional_means() {
        let km = KMCurve {
            jump_points: vec![-1.0, 0.0, 2.0],
            cdf_values: vec![1.0 / 3.0, 2.0 / 3.0, 1.0],
            mass: vec![1.0 / 3.0; 3],
        };
        assert_abs_diff_eq!(conditional_mean_above(&km, -0.5), 1.0, epsilon = 1e-15);

        let km = km_estimate(&[1.0, 2.0, 3.0], &[true; 3], false).unwrap();
        assert_abs_diff_eq!(conditional_mean_above(&km, 0.0), 2.0, epsilon = 1e-15);
        assert_eq!(conditional_mean_above(&km, 5.0), 3.0);
        let fast = TailMeans::new(&km);
        for e in [-1.0, 0.0, 1.0, 1.5, 2.0, 2.9, 3.0, 10.0] {
            assert_abs_diff_eq!(
                fast.above(e),
                conditional_mean_above(&km, e),
                epsilon = 1e-14
            );
        }
    }
}
