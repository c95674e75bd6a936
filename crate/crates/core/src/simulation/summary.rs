use std::fmt;

/// Estimation method whose decisions or Q-values are being reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Oracle quantities from the generating model.
    Truth,
    BjQ,
    CoxQ,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Truth => "True",
            Method::BjQ => "BJ-Q",
            Method::CoxQ => "Cox-Q",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which decisions an accuracy refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    /// 1-based stage.
    Stage(usize),
    /// The whole arm sequence.
    Cumulative,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Stage(k) => write!(f, "stage{k}"),
            Scope::Cumulative => f.write_str("cumulative"),
        }
    }
}

/// Six-number summary of decision accuracy across replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracySummary {
    pub method: Method,
    pub scope: Scope,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl AccuracySummary {
    /// Quartiles use linear interpolation between order statistics
    /// (Hyndman-Fan type 7). Panics on an empty slice.
    pub fn from_values(method: Method, scope: Scope, values: &[f64]) -> Self {
        assert!(!values.is_empty(), "summary of an empty sample");
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        AccuracySummary {
            method,
            scope,
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Type-7 sample quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
