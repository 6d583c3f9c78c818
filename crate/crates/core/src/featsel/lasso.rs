//! LASSO by cyclic coordinate descent.
//!
//! Objective: `(1/2n) ‖y − b − Xβ‖² + λ ‖β‖₁` with the label coded ±1. Columns
//! and label are centred, so the intercept is `ȳ − x̄ᵀβ` and drops out of the
//! descent.

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::SelectorDecision;

pub const LASSO_TOLERANCE: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Objective after each full sweep, starting from β = 0.
    pub objective_trace: Vec<f64>,
    /// Largest violation of the subgradient optimality conditions.
    pub optimality_residual: f64,
    pub sweeps: usize,
}

struct Centred {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    means: Vec<f64>,
    y_mean: f64,
    /// `‖x_j‖² / n`
    norms: Vec<f64>,
}

fn centre(columns: &[Vec<f64>], y: &[f64]) -> Centred {
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut cols = Vec::with_capacity(columns.len());
    let mut means = Vec::with_capacity(columns.len());
    let mut norms = Vec::with_capacity(columns.len());
    for col in columns {
        let m = col.iter().sum::<f64>() / n;
        let c: Vec<f64> = col.iter().map(|v| v - m).collect();
        norms.push(c.iter().map(|v| v * v).sum::<f64>() / n);
        means.push(m);
        cols.push(c);
    }
    Centred {
        cols,
        y: yc,
        means,
        y_mean,
        norms,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

fn objective(residual: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = residual.len() as f64;
    dot(residual, residual) / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Smallest λ with an all-zero solution: `max_j |x_jᵀ(y − ȳ)| / n`.
pub fn lambda_max(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    let c = centre(columns, y);
    let n = y.len() as f64;
    c.cols.iter().map(|col| dot(col, &c.y).abs() / n).fold(0.0, f64::max)
}

/// Solves the problem for one λ on column-major `columns`. Sweeps stop once
/// no coefficient moves by more than [`LASSO_TOLERANCE`].
pub fn fit_lasso(columns: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LassoFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda {lambda} must be finite and >= 0")));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("lasso needs rows".into()));
    }
    let c = centre(columns, y);
    let n = y.len() as f64;
    let p = columns.len();
    let mut beta = vec![0.0; p];
    let mut r = c.y.clone();
    let mut trace = vec![objective(&r, &beta, lambda)];
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_step = 0.0f64;
        for j in 0..p {
            if c.norms[j] <= 0.0 {
                continue;
            }
            let col = &c.cols[j];
            let rho = dot(col, &r) / n + c.norms[j] * beta[j];
            let new = soft_threshold(rho, lambda) / c.norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (ri, xi) in r.iter_mut().zip(col) {
                    *ri -= delta * xi;
                }
                beta[j] = new;
                max_step = max_step.max(delta.abs());
            }
        }
        trace.push(objective(&r, &beta, lambda));
        if max_step < LASSO_TOLERANCE {
            break;
        }
    }
    // recompute the residual from scratch before checking optimality
    let mut r = c.y.clone();
    for (j, col) in c.cols.iter().enumerate() {
        if beta[j] != 0.0 {
            for (ri, xi) in r.iter_mut().zip(col) {
                *ri -= beta[j] * xi;
            }
        }
    }
    let residual = (0..p)
        .map(|j| {
            let g = -dot(&c.cols[j], &r) / n;
            if beta[j] != 0.0 {
                (g + lambda * beta[j].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max);
    let intercept = c.y_mean - dot(&c.means, &beta);
    Ok(LassoFit {
        lambda,
        coefficients: beta,
        intercept,
        objective_trace: trace,
        optimality_residual: residual,
        sweeps,
    })
}

fn coded_label(train: &Dataset) -> Vec<f64> {
    train.labels.iter().map(|&y| if y == 1 { 1.0 } else { -1.0 }).collect()
}

/// Selects the columns with non-zero LASSO coefficients; scores are |β|.
pub fn select_lasso(train: &Dataset, lambda: f64) -> Result<SelectorDecision> {
    train.require_fit_partition("select_lasso")?;
    train.require_complete()?;
    let fit = fit_lasso(&train.features.columns(), &coded_label(train), lambda)?;
    let selected = train
        .column_ids()
        .iter()
        .zip(&fit.coefficients)
        .filter(|(_, b)| **b != 0.0)
        .map(|(&id, _)| id)
        .collect();
    Ok(SelectorDecision::new(
        "lasso",
        selected,
        train.column_ids(),
        Some(fit.coefficients.iter().map(|b| b.abs()).collect()),
    ))
}

/// Largest λ (by bisection on `[0, λ_max]`) whose solution keeps at least
/// `n_keep` non-zero coefficients, or 0 if none does.
pub fn lambda_for_count(train: &Dataset, n_keep: usize) -> Result<f64> {
    train.require_complete()?;
    let cols = train.features.columns();
    let y = coded_label(train);
    let (mut lo, mut hi) = (0.0, lambda_max(&cols, &y));
    let count = |l: f64| -> Result<usize> { Ok(fit_lasso(&cols, &y, l)?.coefficients.iter().filter(|b| **b != 0.0).count()) };
    if count(lo)? < n_keep {
        return Ok(0.0);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if count(mid)? >= n_keep {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    Ok(lo)
}
