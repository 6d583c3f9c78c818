//! Stagewise boosting of regression trees on the log-loss.
//!
//! Each round fits a tree to the current gradients, shrinks it, and then
//! halves its step until the training loss does not rise, so the loss trace
//! is non-increasing. The accepted step is folded into the leaf values.

use super::linear::sigmoid;
use super::tree::{grow, Acc, Criterion, GrowParams, Presorted, Tree};

#[derive(Debug, Clone, Copy)]
pub(crate) enum BoostKind {
    /// Squared-error tree on residuals `y − p`, Newton leaf values.
    Gradient,
    /// Second-order gain with leaf L2 `lambda` and split penalty `gamma`.
    Regularized { lambda: f64, gamma: f64 },
}

pub(crate) struct BoostParams {
    pub kind: BoostKind,
    pub n_rounds: usize,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

pub(crate) struct BoostFit {
    pub base_margin: f64,
    pub trees: Vec<Tree>,
    pub trace: Vec<f64>,
    pub importances: Vec<f64>,
}

fn log_loss(margins: &[f64], y: &[u8], sw: &[f64], wsum: f64) -> f64 {
    margins
        .iter()
        .zip(y)
        .zip(sw)
        .map(|((&f, &y), &w)| w * (f.max(0.0) + (-f.abs()).exp().ln_1p() - y as f64 * f))
        .sum::<f64>()
        / wsum
}

/// Weighted prior log-odds of the positive class.
pub(crate) fn prior_margin(y: &[u8], sw: &[f64]) -> f64 {
    let wsum: f64 = sw.iter().sum();
    let pos: f64 = y.iter().zip(sw).filter(|(&y, _)| y == 1).map(|(_, w)| w).sum();
    let p = (pos / wsum).clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// `x` is the same data as `data`, row-major.
pub(crate) fn fit_boosting(data: &Presorted, x: &[f64], y: &[u8], sw: &[f64], p: &BoostParams) -> BoostFit {
    let n = y.len();
    let n_features = data.n_features();
    let wsum: f64 = sw.iter().sum();
    let base_margin = prior_margin(y, sw);
    let mut margins = vec![base_margin; n];
    let mut loss = log_loss(&margins, y, sw, wsum);
    let mut trace = vec![loss];
    let mut trees = Vec::with_capacity(p.n_rounds);
    let mut importances = vec![0.0; n_features];
    let criterion = match p.kind {
        BoostKind::Gradient => Criterion::SquaredError,
        BoostKind::Regularized { lambda, gamma } => Criterion::SecondOrder { lambda, gamma },
    };
    let grow_params = GrowParams {
        max_depth: p.max_depth,
        min_leaf: p.min_leaf,
        criterion,
        max_features: None,
    };
    for _ in 0..p.n_rounds {
        let stats: Vec<Acc> = (0..n)
            .map(|i| {
                let prob = sigmoid(margins[i]);
                let h = sw[i] * prob * (1.0 - prob);
                match p.kind {
                    BoostKind::Gradient => {
                        let r = y[i] as f64 - prob;
                        Acc {
                            n: 1.0,
                            w: sw[i],
                            a: sw[i] * r,
                            b: sw[i] * r * r,
                            c: h,
                        }
                    }
                    BoostKind::Regularized { .. } => Acc {
                        n: 1.0,
                        w: sw[i],
                        a: sw[i] * (prob - y[i] as f64),
                        b: 0.0,
                        c: h,
                    },
                }
            })
            .collect();
        let grown = grow(data, &stats, &grow_params, None);
        let mut tree = grown.tree;
        tree.scale_leaves(p.shrinkage);
        let delta: Vec<f64> = (0..n)
            .map(|i| tree.predict_row(&x[i * n_features..(i + 1) * n_features]))
            .collect();
        let mut step = 1.0;
        let (next_margins, next_loss) = loop {
            let cand: Vec<f64> = margins.iter().zip(&delta).map(|(m, d)| m + step * d).collect();
            let l = log_loss(&cand, y, sw, wsum);
            if l <= loss {
                break (cand, l);
            }
            step /= 2.0;
            if step < 1e-6 {
                step = 0.0;
                break (margins.clone(), loss);
            }
        };
        tree.scale_leaves(step);
        if step > 0.0 {
            for (acc, g) in importances.iter_mut().zip(&grown.gains) {
                *acc += g;
            }
        }
        margins = next_margins;
        loss = next_loss;
        trace.push(loss);
        trees.push(tree);
    }
    BoostFit {
        base_margin,
        trees,
        trace,
        importances,
    }
}

pub(crate) fn boosted_margin(base_margin: f64, trees: &[Tree], row: &[f64]) -> f64 {
    trees.iter().fold(base_margin, |m, t| m + t.predict_row(row))
}
