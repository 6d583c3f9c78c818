//! Six binary classifiers behind one train/score contract.
//!
//! Scores are in `[0, 1]`: sigmoid outputs for the linear and boosted
//! families, weighted leaf fractions for trees and forests.

mod boosting;
mod forest;
pub mod linear;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};

pub use linear::{gradient_check, gradient_check_at, loss_and_gradient, relative_error, sigmoid, GradientCheck, LossGradient};
pub use tree::{Tree, TreeNode};

use boosting::{boosted_margin, fit_boosting, BoostKind, BoostParams};
use forest::{fit_forest, forest_score, ForestParams};
use linear::{fit_logistic, fit_svm, Design};
use tree::{grow, Acc, Criterion, GrowParams, Presorted};

/// Version tag of the serialized model format.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Logistic,
    LinearSvm,
    DecisionTree,
    RandomForest,
    GradientBoosting,
    RegularizedBoosting,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::Logistic,
        ModelFamily::LinearSvm,
        ModelFamily::DecisionTree,
        ModelFamily::RandomForest,
        ModelFamily::GradientBoosting,
        ModelFamily::RegularizedBoosting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Logistic => "logistic",
            ModelFamily::LinearSvm => "linear_svm",
            ModelFamily::DecisionTree => "decision_tree",
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::GradientBoosting => "gradient_boosting",
            ModelFamily::RegularizedBoosting => "regularized_boosting",
        }
    }

    /// Table label.
    pub fn abbreviation(self) -> &'static str {
        match self {
            ModelFamily::Logistic => "LR",
            ModelFamily::LinearSvm => "SVM",
            ModelFamily::DecisionTree => "DTC",
            ModelFamily::RandomForest => "RF",
            ModelFamily::GradientBoosting => "GBC",
            ModelFamily::RegularizedBoosting => "XGB",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.name() == s || f.abbreviation().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown model family {s:?}")))
    }
}

/// One struct for every family; each family reads only its own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub c: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub n_trees: usize,
    /// Columns tried per forest split; `None` means `⌊√p⌋`.
    pub feature_subsample: Option<usize>,
    pub n_rounds: usize,
    pub shrinkage: f64,
    pub leaf_l2: f64,
    pub split_gamma: f64,
}

impl Hyperparameters {
    pub fn for_family(family: ModelFamily) -> Self {
        let boosted = matches!(
            family,
            ModelFamily::GradientBoosting | ModelFamily::RegularizedBoosting
        );
        Hyperparameters {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            c: 1.0,
            max_depth: if boosted { 3 } else { 6 },
            min_leaf: 5,
            n_trees: 200,
            feature_subsample: None,
            n_rounds: 200,
            shrinkage: 0.1,
            leaf_l2: 1.0,
            split_gamma: 0.0,
        }
    }

    /// Rates and weights finite and ≥ 0; `c` > 0; depths and counts ≥ 1
    /// except `n_rounds`, where 0 gives the prior-only model.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("l2", self.l2),
            ("c", self.c),
            ("shrinkage", self.shrinkage),
            ("leaf_l2", self.leaf_l2),
            ("split_gamma", self.split_gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if self.c == 0.0 {
            return Err(Error::invalid("c must be positive"));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("max_depth", self.max_depth),
            ("min_leaf", self.min_leaf),
            ("n_trees", self.n_trees),
            ("feature_subsample", self.feature_subsample.unwrap_or(1)),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Weight of positive rows relative to negatives (which weigh 1).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    None,
    /// negatives / positives in the training data.
    Balanced,
    Positive(f64),
}

/// Per-row weights and the positive-class weight they use.
pub fn sample_weights(cw: &ClassWeight, labels: &[u8]) -> Result<(Vec<f64>, f64)> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    let w = match *cw {
        ClassWeight::None => 1.0,
        ClassWeight::Balanced => {
            if pos == 0 {
                return Err(Error::Class("balanced weights need positive rows".into()));
            }
            neg as f64 / pos as f64
        }
        ClassWeight::Positive(w) => {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!("class weight {w} must be positive")));
            }
            w
        }
    };
    Ok((labels.iter().map(|&y| if y == 1 { w } else { 1.0 }).collect(), w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub hyperparameters: Hyperparameters,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, seed: u64) -> Self {
        ModelSpec {
            family,
            hyperparameters: Hyperparameters::for_family(family),
            class_weight: ClassWeight::None,
            seed,
        }
    }

    pub fn with_class_weight(mut self, cw: ClassWeight) -> Self {
        self.class_weight = cw;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelState {
    Linear { weights: Vec<f64>, bias: f64 },
    Tree(Tree),
    Forest(Vec<Tree>),
    /// Leaf values already include shrinkage and the accepted step.
    Boosted { base_margin: f64, trees: Vec<Tree> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Per epoch (linear) or round (boosting), starting at the initial loss;
    /// empty for trees and forests.
    pub loss_trace: Vec<f64>,
    pub seed: u64,
    pub positive_weight: f64,
    pub n_train_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub column_ids: Vec<usize>,
    pub state: ModelState,
    /// |weight| for linear models, impurity or gain importance for trees.
    pub importances: Vec<f64>,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format_version: u32,
    model: M,
}

impl TrainedModel {
    /// Scores one row given in the model's column order.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        match &self.state {
            ModelState::Linear { weights, bias } => {
                sigmoid(bias + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>())
            }
            ModelState::Tree(t) => t.predict_row(row),
            ModelState::Forest(trees) => forest_score(trees, row),
            ModelState::Boosted { base_margin, trees } => sigmoid(boosted_margin(*base_margin, trees, row)),
        }
    }

    pub fn predict_scores(&self, rows: &FeatureMatrix) -> Result<Vec<f64>> {
        if rows.column_ids() != self.column_ids.as_slice() {
            return Err(Error::ColumnMismatch {
                expected: self.column_ids.clone(),
                got: rows.column_ids().to_vec(),
            });
        }
        let missing = rows.missing_count();
        if missing > 0 {
            return Err(Error::MissingValues(missing));
        }
        Ok((0..rows.n_rows())
            .into_par_iter()
            .map(|r| self.score_row(rows.row(r)))
            .collect())
    }

    /// Hard labels at score ≥ 0.5.
    pub fn predict_labels(&self, rows: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self
            .predict_scores(rows)?
            .into_iter()
            .map(|s| u8::from(s >= 0.5))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&Envelope {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        })
        .map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let env: Envelope<TrainedModel> =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        if env.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                env.format_version
            )));
        }
        Ok(env.model)
    }
}

pub fn predict_scores(m: &TrainedModel, rows: &FeatureMatrix) -> Result<Vec<f64>> {
    m.predict_scores(rows)
}

/// Trains `spec` on a complete, two-class, non-test dataset.
pub fn train(spec: &ModelSpec, data: &Dataset) -> Result<TrainedModel> {
    let hp = &spec.hyperparameters;
    hp.validate()?;
    data.require_fit_partition("train")?;
    data.require_both_classes()?;
    data.require_complete()?;
    if data.n_cols() == 0 {
        return Err(Error::NoFeaturesRemain("training input".into()));
    }
    let (sw, positive_weight) = sample_weights(&spec.class_weight, &data.labels)?;
    let x = data.features.raw_cells();
    let p = data.n_cols();
    let y = &data.labels;
    let presorted = || Presorted::new(data.features.columns(), data.column_ids().to_vec());

    let (state, importances, loss_trace) = match spec.family {
        ModelFamily::Logistic | ModelFamily::LinearSvm => {
            let d = Design { x, p, y, sw: &sw, pen: None };
            let fit = if spec.family == ModelFamily::Logistic {
                fit_logistic(&d, hp.learning_rate, hp.epochs, hp.l2)?
            } else {
                fit_svm(&d, hp.learning_rate, hp.epochs, hp.c)?
            };
            let imp = fit.weights.iter().map(|w| w.abs()).collect();
            (
                ModelState::Linear {
                    weights: fit.weights,
                    bias: fit.bias,
                },
                imp,
                fit.trace,
            )
        }
        ModelFamily::DecisionTree => {
            let stats: Vec<Acc> = y
                .iter()
                .zip(&sw)
                .map(|(&y, &w)| Acc {
                    n: 1.0,
                    w,
                    a: w * y as f64,
                    ..Acc::default()
                })
                .collect();
            let params = GrowParams {
                max_depth: hp.max_depth,
                min_leaf: hp.min_leaf,
                criterion: Criterion::Gini,
                max_features: None,
            };
            let g = grow(&presorted(), &stats, &params, None);
            (ModelState::Tree(g.tree), g.gains, Vec::new())
        }
        ModelFamily::RandomForest => {
            let max_features = hp
                .feature_subsample
                .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
                .min(p);
            let fit = fit_forest(
                &presorted(),
                y,
                &sw,
                &ForestParams {
                    n_trees: hp.n_trees,
                    max_depth: hp.max_depth,
                    min_leaf: hp.min_leaf,
                    max_features,
                    seed: spec.seed,
                },
            );
            (ModelState::Forest(fit.trees), fit.importances, Vec::new())
        }
        ModelFamily::GradientBoosting | ModelFamily::RegularizedBoosting => {
            let kind = if spec.family == ModelFamily::GradientBoosting {
                BoostKind::Gradient
            } else {
                BoostKind::Regularized {
                    lambda: hp.leaf_l2,
                    gamma: hp.split_gamma,
                }
            };
            let fit = fit_boosting(
                &presorted(),
                x,
                y,
                &sw,
                &BoostParams {
                    kind,
                    n_rounds: hp.n_rounds,
                    shrinkage: hp.shrinkage,
                    max_depth: hp.max_depth,
                    min_leaf: hp.min_leaf,
                },
            );
            (
                ModelState::Boosted {
                    base_margin: fit.base_margin,
                    trees: fit.trees,
                },
                fit.importances,
                fit.trace,
            )
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        column_ids: data.column_ids().to_vec(),
        state,
        importances,
        meta: TrainingMeta {
            loss_trace,
            seed: spec.seed,
            positive_weight,
            n_train_rows: data.n_rows(),
        },
    })
}
