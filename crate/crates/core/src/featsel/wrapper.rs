//! Model-driven selectors: recursive elimination and sequential search.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::metrics::{confusion, metric_set};
use crate::models::{train, ModelFamily, ModelSpec};
use crate::preprocess::stratified_kfold;

use super::{check_n_keep, SelectorDecision};

/// Refits `estimator` and drops the least important column until `n_keep`
/// remain. Importance is |coefficient| for linear models and impurity
/// importance for forests; ties drop the higher column id. A column's score
/// is the round it was eliminated in (1-based); kept columns score one more
/// than the last round.
pub fn select_rfe(train_set: &Dataset, estimator: &ModelSpec, n_keep: usize) -> Result<SelectorDecision> {
    train_set.require_fit_partition("select_rfe")?;
    check_n_keep(n_keep, train_set.n_cols())?;
    if !matches!(
        estimator.family,
        ModelFamily::Logistic | ModelFamily::LinearSvm | ModelFamily::RandomForest
    ) {
        return Err(Error::invalid(format!(
            "recursive elimination needs logistic, linear_svm or random_forest, got {}",
            estimator.family
        )));
    }
    let ids = train_set.column_ids();
    let mut remaining: Vec<usize> = (0..train_set.n_cols()).collect();
    let mut eliminated_at = vec![0usize; ids.len()];
    let mut round = 0;
    while remaining.len() > n_keep {
        round += 1;
        let model = train(estimator, &train_set.select_columns(&remaining))?;
        let weakest = (0..remaining.len())
            .min_by(|&a, &b| {
                model.importances[a]
                    .total_cmp(&model.importances[b])
                    .then(ids[remaining[b]].cmp(&ids[remaining[a]]))
            })
            .expect("remaining is non-empty");
        eliminated_at[remaining[weakest]] = round;
        remaining.remove(weakest);
    }
    let scores = eliminated_at
        .iter()
        .map(|&r| if r == 0 { (round + 1) as f64 } else { r as f64 })
        .collect();
    Ok(SelectorDecision::new(
        format!("rfe_{}", estimator.family),
        remaining.iter().map(|&c| ids[c]).collect(),
        ids,
        Some(scores),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            _ => Err(Error::invalid(format!("unknown direction {s:?}"))),
        }
    }
}

/// Mean balanced accuracy (threshold 0.5) of `estimator` over the folds,
/// using only the column positions in `cols`.
pub fn cv_balanced_accuracy(
    folds: &[(Dataset, Dataset)],
    estimator: &ModelSpec,
    cols: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    for (fit, val) in folds {
        let model = train(estimator, &fit.select_columns(cols))?;
        let scores = model.predict_scores(&val.select_columns(cols).features)?;
        total += metric_set(&confusion(&val.labels, &scores, 0.5)?).balanced_accuracy;
    }
    Ok(total / folds.len() as f64)
}

/// Greedy forward addition or backward removal of the column that gives the
/// best mean CV balanced accuracy, until `n_keep` columns are selected.
/// Equal scores pick the lowest column id. Scores record the CV accuracy at
/// the step where each column was added (forward) or removed (backward).
pub fn select_sfs(
    train_set: &Dataset,
    estimator: &ModelSpec,
    direction: Direction,
    n_keep: usize,
    cv_folds: usize,
    seed: u64,
) -> Result<SelectorDecision> {
    train_set.require_fit_partition("select_sfs")?;
    check_n_keep(n_keep, train_set.n_cols())?;
    if cv_folds < 2 {
        return Err(Error::invalid("cv_folds must be at least 2"));
    }
    let plan = stratified_kfold(train_set, cv_folds, seed)?;
    let folds: Vec<(Dataset, Dataset)> = (0..cv_folds)
        .map(|f| {
            let p = plan.fold(f)?;
            Ok((
                train_set.select_rows(&p.train_row_indices),
                train_set
                    .select_rows(&p.test_row_indices)
                    .with_partition(Partition::Test),
            ))
        })
        .collect::<Result<_>>()?;
    let ids = train_set.column_ids();
    let p = train_set.n_cols();
    let mut chosen: Vec<usize> = match direction {
        Direction::Forward => Vec::new(),
        Direction::Backward => (0..p).collect(),
    };
    let mut scores = vec![f64::NAN; p];
    let done = |chosen: &Vec<usize>| match direction {
        Direction::Forward => chosen.len() >= n_keep,
        Direction::Backward => chosen.len() <= n_keep,
    };
    while !done(&chosen) {
        let candidates: Vec<usize> = match direction {
            Direction::Forward => (0..p).filter(|c| !chosen.contains(c)).collect(),
            Direction::Backward => chosen.clone(),
        };
        let evaluated: Vec<(usize, f64)> = candidates
            .par_iter()
            .map(|&c| {
                let mut cols: Vec<usize> = match direction {
                    Direction::Forward => chosen.iter().copied().chain([c]).collect(),
                    Direction::Backward => chosen.iter().copied().filter(|&k| k != c).collect(),
                };
                cols.sort_unstable();
                Ok((c, cv_balanced_accuracy(&folds, estimator, &cols)?))
            })
            .collect::<Result<_>>()?;
        let (best, score) = evaluated
            .into_iter()
            .reduce(|a, b| {
                if b.1 > a.1 || (b.1 == a.1 && ids[b.0] < ids[a.0]) {
                    b
                } else {
                    a
                }
            })
            .expect("at least one candidate");
        scores[best] = score;
        match direction {
            Direction::Forward => chosen.push(best),
            Direction::Backward => chosen.retain(|&k| k != best),
        }
    }
    chosen.sort_unstable();
    let scores = scores.into_iter().map(|s| if s.is_nan() { 0.0 } else { s }).collect();
    Ok(SelectorDecision::new(
        format!("sfs_{}_{direction}", estimator.family),
        chosen.iter().map(|&c| ids[c]).collect(),
        ids,
        Some(scores),
    ))
}
