//! Small dense least-squares helpers shared by the fitters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition number below which a Gram matrix is treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-10;

/// Reciprocal 2-norm condition number of a symmetric positive semi-definite
/// matrix after scaling it to unit diagonal.
///
/// A zero (or negative) diagonal entry yields 0.
pub fn rcond_equilibrated(gram: &DMatrix<f64>) -> f64 {
    let p = gram.nrows();
    if p == 0 {
        return 1.0;
    }
    let scale: Vec<f64> = (0..p).map(|j| gram[(j, j)]).collect();
    if scale
        .iter()
        .any(|&d| d.is_nan() || d <= 0.0 || d.is_infinite())
    {
        return 0.0;
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] / (scale[i] * scale[j]).sqrt());
    let eig = scaled.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if max.is_nan() || max <= 0.0 {
        return 0.0;
    }
    (min / max).max(0.0)
}

/// Columns that cannot be added (in order) without making the leading Gram
/// block singular.
pub fn dependent_columns(gram: &DMatrix<f64>) -> Vec<usize> {
    let p = gram.nrows();
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    let mut offending = Vec::new();
    for j in 0..p {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = gram.select_rows(&trial).select_columns(&trial);
        if rcond_equilibrated(&sub) < RCOND_THRESHOLD {
            offending.push(j);
        } else {
            kept = trial;
        }
    }
    offending
}

fn column_name(names: Option<&[String]>, j: usize) -> String {
    names
        .and_then(|n| n.get(j).cloned())
        .unwrap_or_else(|| format!("column {j}"))
}

/// Solves `gram * x = rhs` for a symmetric positive definite `gram`,
/// failing with [`Error::RankDeficient`] when it is numerically singular.
pub fn solve_gram(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    names: Option<&[String]>,
) -> Result<DVector<f64>> {
    if rcond_equilibrated(gram) < RCOND_THRESHOLD {
        let mut cols = dependent_columns(gram);
        if cols.is_empty() {
            cols = (0..gram.nrows()).collect();
        }
        return Err(Error::RankDeficient {
            columns: cols.into_iter().map(|j| column_name(names, j)).collect(),
        });
    }
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    gram.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::RankDeficient {
            columns: (0..gram.nrows()).map(|j| column_name(names, j)).collect(),
        })
}

/// Ordinary least squares through the normal equations.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: Option<&[String]>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    let xt = x.transpose();
    solve_gram(&(&xt * x), &(&xt * y), names)
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
