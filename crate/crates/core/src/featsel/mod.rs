//! Feature selection by voting: a roster of selectors each picks columns
//! from the training partition, and a column survives when enough of them
//! chose it.

pub mod boruta;
pub mod filter;
pub mod lasso;
pub mod wrapper;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{ClassWeight, ModelFamily, ModelSpec};
use crate::rng::{derive_seed, round_half_up};

pub use boruta::{boruta, select_boruta, BorutaOutcome, BorutaParams, BorutaStatus};
pub use filter::{select_f_score, select_mutual_info};
pub use lasso::{fit_lasso, lambda_for_count, lambda_max, select_lasso, LassoFit};
pub use wrapper::{select_rfe, select_sfs, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorDecision {
    pub name: String,
    /// Ascending.
    pub selected: Vec<usize>,
    /// Columns the selector saw; `scores` is aligned with it.
    pub column_ids: Vec<usize>,
    pub scores: Option<Vec<f64>>,
}

impl SelectorDecision {
    pub fn new(name: impl Into<String>, mut selected: Vec<usize>, column_ids: &[usize], scores: Option<Vec<f64>>) -> Self {
        selected.sort_unstable();
        SelectorDecision {
            name: name.into(),
            selected,
            column_ids: column_ids.to_vec(),
            scores,
        }
    }
}

pub(crate) fn check_n_keep(n_keep: usize, n_cols: usize) -> Result<()> {
    if n_keep == 0 || n_keep > n_cols {
        return Err(Error::invalid(format!("n_keep {n_keep} outside 1..={n_cols}")));
    }
    Ok(())
}

/// Ids of the `k` highest scores, ties to the lower id; NaN ranks last.
pub(crate) fn top_k(ids: &[usize], scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a], scores[b]);
        match (sa.is_nan(), sb.is_nan()) {
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => sb.total_cmp(&sa),
        }
        .then(ids[a].cmp(&ids[b]))
    });
    let mut out: Vec<usize> = order.into_iter().take(k).map(|i| ids[i]).collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteEntry {
    pub column_id: usize,
    pub votes: usize,
    /// Selector names, sorted.
    pub contributors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVoteLedger {
    pub threshold: usize,
    pub n_selectors: usize,
    /// Descending votes, then ascending column id.
    pub entries: Vec<VoteEntry>,
    /// Ascending ids with `votes >= threshold`.
    pub selected: Vec<usize>,
}

impl FeatureVoteLedger {
    pub fn votes_of(&self, column_id: usize) -> Option<usize> {
        self.entries.iter().find(|e| e.column_id == column_id).map(|e| e.votes)
    }

    /// Columns with at least one vote.
    pub fn voted(&self) -> usize {
        self.entries.iter().filter(|e| e.votes > 0).count()
    }

    pub fn zero_votes(&self) -> usize {
        self.entries.len() - self.voted()
    }

    /// Columns holding the highest vote count.
    pub fn top_columns(&self) -> Vec<usize> {
        let max = self.entries.first().map_or(0, |e| e.votes);
        self.entries
            .iter()
            .take_while(|e| e.votes == max && max > 0)
            .map(|e| e.column_id)
            .collect()
    }

    /// `column_id,votes,contributors` with contributors joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("column_id,votes,contributors\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.column_id, e.votes, e.contributors.join(";")));
        }
        out
    }
}

/// Counts, for every column of `universe`, the decisions that selected it.
/// A threshold above the number of decisions selects nothing (with a
/// warning).
pub fn vote(universe: &[usize], decisions: &[SelectorDecision], threshold: usize) -> Result<FeatureVoteLedger> {
    if decisions.is_empty() {
        return Err(Error::EmptyInput("no selector decisions to vote on".into()));
    }
    if threshold == 0 {
        return Err(Error::invalid("vote threshold must be at least 1"));
    }
    if threshold > decisions.len() {
        log::warn!(
            "vote threshold {threshold} exceeds the {} selectors; nothing can be selected",
            decisions.len()
        );
    }
    let mut tally: BTreeMap<usize, Vec<String>> = universe.iter().map(|&c| (c, Vec::new())).collect();
    for d in decisions {
        for &c in &d.selected {
            tally
                .get_mut(&c)
                .ok_or(Error::UnknownColumn(c))?
                .push(d.name.clone());
        }
    }
    let mut entries: Vec<VoteEntry> = tally
        .into_iter()
        .map(|(column_id, mut contributors)| {
            contributors.sort();
            VoteEntry {
                column_id,
                votes: contributors.len(),
                contributors,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.votes.cmp(&a.votes).then(a.column_id.cmp(&b.column_id)));
    let mut selected: Vec<usize> = entries
        .iter()
        .filter(|e| e.votes >= threshold)
        .map(|e| e.column_id)
        .collect();
    selected.sort_unstable();
    Ok(FeatureVoteLedger {
        threshold,
        n_selectors: decisions.len(),
        entries,
        selected,
    })
}

/// How a LASSO voter picks λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LassoLambda {
    Fixed(f64),
    /// Largest λ keeping at least `scale × n_keep` non-zero coefficients.
    ForCount(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectorKind {
    FScore,
    MutualInfo {
        n_bins: usize,
    },
    Lasso {
        lambda: LassoLambda,
    },
    Boruta {
        max_iterations: usize,
        alpha: f64,
        n_trees: usize,
    },
    Rfe {
        estimator: ModelFamily,
    },
    Sfs {
        estimator: ModelFamily,
        direction: Direction,
        cv_folds: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub name: String,
    #[serde(flatten)]
    pub kind: SelectorKind,
}

impl SelectorConfig {
    pub fn new(name: &str, kind: SelectorKind) -> Self {
        SelectorConfig {
            name: name.into(),
            kind,
        }
    }
}

/// Twelve voters: F-score; mutual information at 5, 10 and 20 bins; LASSO
/// at two budgets; Boruta; RFE with logistic, linear SVM and forest; forward
/// SFS with boosted trees and linear SVM.
pub fn default_roster() -> Vec<SelectorConfig> {
    use SelectorKind::*;
    vec![
        SelectorConfig::new("f_score", FScore),
        SelectorConfig::new("mutual_info_5", MutualInfo { n_bins: 5 }),
        SelectorConfig::new("mutual_info_10", MutualInfo { n_bins: 10 }),
        SelectorConfig::new("mutual_info_20", MutualInfo { n_bins: 20 }),
        SelectorConfig::new("lasso_narrow", Lasso { lambda: LassoLambda::ForCount(0.75) }),
        SelectorConfig::new("lasso_wide", Lasso { lambda: LassoLambda::ForCount(1.25) }),
        SelectorConfig::new(
            "boruta",
            Boruta {
                max_iterations: 30,
                alpha: 0.05,
                n_trees: 50,
            },
        ),
        SelectorConfig::new("rfe_logistic", Rfe { estimator: ModelFamily::Logistic }),
        SelectorConfig::new("rfe_linear_svm", Rfe { estimator: ModelFamily::LinearSvm }),
        SelectorConfig::new("rfe_forest", Rfe { estimator: ModelFamily::RandomForest }),
        SelectorConfig::new(
            "sfs_boosted_trees",
            Sfs {
                estimator: ModelFamily::GradientBoosting,
                direction: Direction::Forward,
                cv_folds: 3,
            },
        ),
        SelectorConfig::new(
            "sfs_linear_svm",
            Sfs {
                estimator: ModelFamily::LinearSvm,
                direction: Direction::Forward,
                cv_folds: 3,
            },
        ),
    ]
}

/// Class-balanced estimator used inside the wrapper selectors, sized so a
/// full roster stays cheap: linear models run 100 epochs (50 inside SFS),
/// forests 50 trees, boosted trees 10 rounds of depth 2.
pub fn selector_estimator(family: ModelFamily, in_sfs: bool, seed: u64) -> ModelSpec {
    let mut spec = ModelSpec::new(family, seed).with_class_weight(ClassWeight::Balanced);
    let hp = &mut spec.hyperparameters;
    hp.epochs = if in_sfs { 50 } else { 100 };
    hp.n_trees = 50;
    hp.min_leaf = 1;
    if matches!(family, ModelFamily::GradientBoosting | ModelFamily::RegularizedBoosting) {
        hp.n_rounds = 10;
        hp.max_depth = 2;
        hp.shrinkage = 0.3;
        hp.min_leaf = 5;
    }
    spec
}

/// Per-selector column budget: `round(keep_fraction × n_cols)`, at least 1.
pub fn n_keep_for(keep_fraction: f64, n_cols: usize) -> usize {
    round_half_up(keep_fraction * n_cols as f64).clamp(1, n_cols.max(1))
}

/// Runs one configured selector with its own derived seed.
pub fn run_selector(train: &Dataset, cfg: &SelectorConfig, n_keep: usize, master_seed: u64) -> Result<SelectorDecision> {
    let seed = derive_seed(master_seed, &cfg.name);
    let mut decision = match &cfg.kind {
        SelectorKind::FScore => select_f_score(train, n_keep)?,
        SelectorKind::MutualInfo { n_bins } => select_mutual_info(train, n_keep, *n_bins)?,
        SelectorKind::Lasso { lambda } => {
            let l = match *lambda {
                LassoLambda::Fixed(l) => l,
                LassoLambda::ForCount(scale) => {
                    lambda_for_count(train, n_keep_for(scale * n_keep as f64 / train.n_cols() as f64, train.n_cols()))?
                }
            };
            select_lasso(train, l)?
        }
        SelectorKind::Boruta {
            max_iterations,
            alpha,
            n_trees,
        } => {
            let mut p = BorutaParams::new(*max_iterations, *alpha, seed);
            p.n_trees = *n_trees;
            select_boruta(train, &p)?
        }
        SelectorKind::Rfe { estimator } => select_rfe(train, &selector_estimator(*estimator, false, seed), n_keep)?,
        SelectorKind::Sfs {
            estimator,
            direction,
            cv_folds,
        } => select_sfs(
            train,
            &selector_estimator(*estimator, true, seed),
            *direction,
            n_keep,
            *cv_folds,
            seed,
        )?,
    };
    decision.name = cfg.name.clone();
    Ok(decision)
}

/// Runs every selector on the training partition; output order follows the
/// roster.
pub fn run_roster(train: &Dataset, roster: &[SelectorConfig], keep_fraction: f64, master_seed: u64) -> Result<Vec<SelectorDecision>> {
    train.require_fit_partition("run_roster")?;
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invalid(format!("keep fraction {keep_fraction} outside (0, 1]")));
    }
    let mut names: Vec<&str> = roster.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("selector names must be unique"));
    }
    let n_keep = n_keep_for(keep_fraction, train.n_cols());
    roster
        .par_iter()
        .map(|cfg| {
            let t = std::time::Instant::now();
            let d = run_selector(train, cfg, n_keep, master_seed);
            log::info!("selector {} finished in {:.2?}", cfg.name, t.elapsed());
            d
        })
        .collect()
}
