//! Weighted ridge regression on binary mask designs.
//!
//! Solves argmin over (beta, b) of
//! sum_i w_i (y_i - b - z_i . beta)^2 + lambda ||beta||^2
//! with an unpenalized intercept, via normal equations on the weighted,
//! column-centered system.

use crate::error::{Error, Result};

/// Relative threshold below which a column's weighted variance counts as zero.
const VARIANCE_TOL: f64 = 1e-14;
/// Relative pivot threshold for the elimination solver.
const PIVOT_TOL: f64 = 1e-12;

/// Result of a surrogate fit.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    /// One signed coefficient per mask column (token).
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Weighted R^2 of the fit; in (-inf, 1].
    pub r2: f64,
    /// Columns that were constant across all samples; their coefficients
    /// are forced to zero.
    pub degenerate_columns: Vec<usize>,
    /// True when the targets themselves carry no weighted variance.
    pub constant_targets: bool,
}

/// Fit the weighted ridge surrogate. `masks` is the sample-by-token design,
/// `targets` the probe outputs, `weights` the proximity weights.
pub fn fit_surrogate(
    masks: &[Vec<bool>],
    targets: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<RidgeFit> {
    let n = masks.len();
    if n < 2 || targets.len() != n || weights.len() != n {
        return Err(Error::Argument(format!(
            "surrogate fit needs >= 2 aligned rows: masks {n}, targets {}, weights {}",
            targets.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::Argument("weights must be finite and non-negative".into()));
    }
    if weights.iter().filter(|&&w| w > 0.0).count() < 2 {
        return Err(Error::Argument("at least two weights must be strictly positive".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Argument("ridge lambda must be non-negative".into()));
    }
    let p = masks[0].len();
    if masks.iter().any(|m| m.len() != p) {
        return Err(Error::Argument("mask rows have inconsistent lengths".into()));
    }

    let w_sum: f64 = weights.iter().sum();
    let y_bar = dot_w(weights, targets) / w_sum;
    let mut z_bar = vec![0.0; p];
    for (row, &w) in masks.iter().zip(weights) {
        for (j, &kept) in row.iter().enumerate() {
            if kept {
                z_bar[j] += w;
            }
        }
    }
    for zb in &mut z_bar {
        *zb /= w_sum;
    }

    // weighted column variances identify constant tokens
    let mut variance = vec![0.0; p];
    for (row, &w) in masks.iter().zip(weights) {
        for j in 0..p {
            let zc = bit(row[j]) - z_bar[j];
            variance[j] += w * zc * zc;
        }
    }
    let degenerate_columns: Vec<usize> =
        (0..p).filter(|&j| variance[j] <= VARIANCE_TOL * w_sum).collect();
    let active: Vec<usize> = (0..p).filter(|j| !degenerate_columns.contains(j)).collect();
    let q = active.len();

    // normal equations over the active, centered columns
    let mut a = vec![vec![0.0; q]; q];
    let mut b = vec![0.0; q];
    for (row, (&w, &y)) in masks.iter().zip(weights.iter().zip(targets)) {
        let yc = y - y_bar;
        for (ai, &j) in active.iter().enumerate() {
            let zi = bit(row[j]) - z_bar[j];
            b[ai] += w * zi * yc;
            for (bi, &k) in active.iter().enumerate().skip(ai) {
                a[ai][bi] += w * zi * (bit(row[k]) - z_bar[k]);
            }
        }
    }
    for i in 0..q {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
        a[i][i] += lambda;
    }

    let (solution, dropped) = solve_with_pivoting(a, b);
    let mut coefficients = vec![0.0; p];
    let mut degenerate = degenerate_columns;
    for (ai, &j) in active.iter().enumerate() {
        coefficients[j] = solution[ai];
    }
    for ai in dropped {
        degenerate.push(active[ai]);
    }
    degenerate.sort_unstable();
    degenerate.dedup();

    let intercept = y_bar - coefficients.iter().zip(&z_bar).map(|(c, zb)| c * zb).sum::<f64>();

    let mut sse = 0.0;
    let mut sst = 0.0;
    for (row, (&w, &y)) in masks.iter().zip(weights.iter().zip(targets)) {
        let pred = intercept
            + row
                .iter()
                .enumerate()
                .map(|(j, &kept)| coefficients[j] * bit(kept))
                .sum::<f64>();
        sse += w * (y - pred) * (y - pred);
        sst += w * (y - y_bar) * (y - y_bar);
    }
    let constant_targets = sst <= VARIANCE_TOL * w_sum;
    let r2 = if constant_targets { 0.0 } else { 1.0 - sse / sst };

    Ok(RidgeFit { coefficients, intercept, r2, degenerate_columns: degenerate, constant_targets })
}

fn bit(kept: bool) -> f64 {
    if kept {
        1.0
    } else {
        0.0
    }
}

fn dot_w(weights: &[f64], values: &[f64]) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Gaussian elimination with partial pivoting on a symmetric PSD system.
/// Unresolvable pivots (rank deficiency at lambda = 0) zero out that
/// variable; their indices are returned so callers can flag them.
fn solve_with_pivoting(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> (Vec<f64>, Vec<usize>) {
    let n = b.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1.0);
    let mut dropped = Vec::new();

    for k in 0..n {
        let mut pivot_row = k;
        for r in k + 1..n {
            if a[r][k].abs() > a[pivot_row][k].abs() {
                pivot_row = r;
            }
        }
        if a[pivot_row][k].abs() <= PIVOT_TOL * scale {
            // rank deficient: replace equation k with x_k = 0
            dropped.push(k);
            for r in k..n {
                a[r][k] = 0.0;
            }
            for c in k..n {
                a[k][c] = 0.0;
            }
            a[k][k] = 1.0;
            b[k] = 0.0;
            continue;
        }
        if pivot_row != k {
            a.swap(k, pivot_row);
            b.swap(k, pivot_row);
        }
        for r in k + 1..n {
            let factor = a[r][k] / a[k][k];
            if factor != 0.0 {
                for c in k..n {
                    a[r][c] -= factor * a[k][c];
                }
                b[r] -= factor * b[k];
            }
        }
    }

    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for c in k + 1..n {
            acc -= a[k][c] * x[c];
        }
        x[k] = acc / a[k][k];
    }
    (x, dropped)
}
