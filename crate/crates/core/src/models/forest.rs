//! Bootstrap-bagged Gini trees with per-node column subsampling.

use rand::Rng as _;
use rayon::prelude::*;

use crate::rng::substream;

use super::tree::{grow, Acc, Criterion, GrowParams, Presorted, Tree};

pub(crate) struct ForestFit {
    pub trees: Vec<Tree>,
    /// Mean over trees of each tree's gain share per feature.
    pub importances: Vec<f64>,
}

pub(crate) struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: usize,
    pub seed: u64,
}

/// Tree `t` draws its bootstrap and its column subsets from stream
/// `(seed, t)`, so the forest does not depend on the thread count.
pub(crate) fn fit_forest(data: &Presorted, y: &[u8], sw: &[f64], p: &ForestParams) -> ForestFit {
    let n = y.len();
    let grow_params = GrowParams {
        max_depth: p.max_depth,
        min_leaf: p.min_leaf,
        criterion: Criterion::Gini,
        max_features: Some(p.max_features),
    };
    let grown: Vec<(Tree, Vec<f64>)> = (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(p.seed, t as u64);
            let mut mult = vec![0u32; n];
            for _ in 0..n {
                mult[rng.random_range(0..n)] += 1;
            }
            let stats: Vec<Acc> = (0..n)
                .map(|r| {
                    let m = mult[r] as f64;
                    Acc {
                        n: m,
                        w: m * sw[r],
                        a: m * sw[r] * y[r] as f64,
                        ..Acc::default()
                    }
                })
                .collect();
            let g = grow(data, &stats, &grow_params, Some(&mut rng));
            let total: f64 = g.gains.iter().sum();
            let share = if total > 0.0 {
                g.gains.iter().map(|v| v / total).collect()
            } else {
                vec![0.0; g.gains.len()]
            };
            (g.tree, share)
        })
        .collect();
    let mut importances = vec![0.0; data.n_features()];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, share) in grown {
        for (acc, s) in importances.iter_mut().zip(&share) {
            *acc += s / p.n_trees as f64;
        }
        trees.push(tree);
    }
    ForestFit { trees, importances }
}

/// Mean leaf fraction over the trees.
pub(crate) fn forest_score(trees: &[Tree], row: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len() as f64
}
