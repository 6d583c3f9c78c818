//! Scenario configuration, read from TOML. Unknown keys are errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featsel::{default_roster, SelectorConfig};
use crate::impute::{NoiseMode, SimpleStrategy};
use crate::models::{ClassWeight, Hyperparameters, ModelFamily, ModelSpec};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub data_path: PathBuf,
    pub labels_path: PathBuf,
}

impl DataConfig {
    /// `secom.data` and `secom_labels.data` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        DataConfig {
            data_path: dir.as_ref().join("secom.data"),
            labels_path: dir.as_ref().join("secom_labels.data"),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::in_dir("data/secom")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    /// Columns missing in more than this fraction of rows are dropped.
    pub missing_threshold: f64,
    pub correlation_threshold: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            missing_threshold: 0.5,
            correlation_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Holdout,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub mode: EvalMode,
    /// Used by holdout mode.
    pub test_fraction: f64,
    /// Used by k-fold mode.
    pub k: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            mode: EvalMode::Holdout,
            test_fraction: 0.3,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    Simple,
    Knn,
    Mice,
}

impl fmt::Display for ImputeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImputeMethod::Simple => "simple",
            ImputeMethod::Knn => "knn",
            ImputeMethod::Mice => "mice",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeConfig {
    pub method: ImputeMethod,
    /// Mean/median cutoff on |skewness| for the simple plan.
    pub skew_threshold: f64,
    /// One bounded pass that toggles mean/median columns whose skewness
    /// changes sign after imputation.
    pub refine: bool,
    pub knn_k: usize,
    pub mice_iterations: usize,
    pub mice_noise: NoiseMode,
    /// Column id (as a string key) to simple strategy; these columns bypass
    /// `method`.
    pub overrides: BTreeMap<String, SimpleStrategy>,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig {
            method: ImputeMethod::Knn,
            skew_threshold: 1.0,
            refine: true,
            knn_k: 5,
            mice_iterations: 5,
            mice_noise: NoiseMode::DeterministicPrediction,
            overrides: BTreeMap::new(),
        }
    }
}

impl ImputeConfig {
    pub fn override_ids(&self) -> Result<BTreeMap<usize, SimpleStrategy>> {
        self.overrides
            .iter()
            .map(|(k, &s)| {
                k.parse::<usize>()
                    .map(|id| (id, s))
                    .map_err(|_| Error::Config(format!("impute override key {k:?} is not a column id")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// Minimum votes for a column to be kept.
    pub vote_threshold: usize,
    /// Per-selector column budget as a fraction of the columns offered.
    pub keep_fraction: f64,
    pub roster: Vec<SelectorConfig>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            vote_threshold: 3,
            keep_fraction: 0.2,
            roster: default_roster(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScenario {
    None,
    Smote,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleConfig {
    pub scenario: ResampleScenario,
    /// SMOTE target minority/majority ratio.
    pub over_ratio: Option<f64>,
    /// Under-sampling target minority/majority ratio.
    pub under_ratio: Option<f64>,
    pub k_neighbors: usize,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            scenario: ResampleScenario::None,
            over_ratio: None,
            under_ratio: None,
            k_neighbors: 5,
        }
    }
}

impl ResampleConfig {
    pub fn none() -> Self {
        ResampleConfig::default()
    }

    pub fn smote(over_ratio: f64) -> Self {
        ResampleConfig {
            scenario: ResampleScenario::Smote,
            over_ratio: Some(over_ratio),
            ..ResampleConfig::default()
        }
    }

    pub fn combined(over_ratio: f64, under_ratio: f64) -> Self {
        ResampleConfig {
            scenario: ResampleScenario::Combined,
            over_ratio: Some(over_ratio),
            under_ratio: Some(under_ratio),
            ..ResampleConfig::default()
        }
    }

    /// `none`, `smote_<over>` or `combined_<over>_<under>`.
    pub fn label(&self) -> String {
        let r = |v: Option<f64>| v.map_or_else(|| "?".to_string(), |x| x.to_string());
        match self.scenario {
            ResampleScenario::None => "none".into(),
            ResampleScenario::Smote => format!("smote_{}", r(self.over_ratio)),
            ResampleScenario::Combined => format!("combined_{}_{}", r(self.over_ratio), r(self.under_ratio)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ratio = |name: &str, v: Option<f64>, required: bool| -> Result<()> {
            match v {
                None if required => Err(Error::Config(format!("resample.{name} is required for {}", self.label()))),
                Some(x) if !(x > 0.0 && x <= 1.0) => {
                    Err(Error::Config(format!("resample.{name} = {x} outside (0, 1]")))
                }
                _ => Ok(()),
            }
        };
        match self.scenario {
            ResampleScenario::None => {
                if self.over_ratio.is_some() || self.under_ratio.is_some() {
                    return Err(Error::Config("resample ratios given with scenario none".into()));
                }
            }
            ResampleScenario::Smote => {
                ratio("over_ratio", self.over_ratio, true)?;
                if self.under_ratio.is_some() {
                    return Err(Error::Config("resample.under_ratio given with scenario smote".into()));
                }
            }
            ResampleScenario::Combined => {
                ratio("over_ratio", self.over_ratio, true)?;
                ratio("under_ratio", self.under_ratio, true)?;
            }
        }
        if self.k_neighbors == 0 {
            return Err(Error::Config("resample.k_neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

/// Hyperparameter overrides; absent keys keep the family defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperOverrides {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub l2: Option<f64>,
    pub c: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub n_trees: Option<usize>,
    pub feature_subsample: Option<usize>,
    pub n_rounds: Option<usize>,
    pub shrinkage: Option<f64>,
    pub leaf_l2: Option<f64>,
    pub split_gamma: Option<f64>,
}

impl HyperOverrides {
    pub fn apply(&self, hp: &mut Hyperparameters) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { hp.$f = v; })*};
        }
        set!(learning_rate, epochs, l2, c, max_depth, min_leaf, n_trees, n_rounds, shrinkage, leaf_l2, split_gamma);
        if self.feature_subsample.is_some() {
            hp.feature_subsample = self.feature_subsample;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: ModelFamily,
    /// Defaults to the family name; used in file names.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub class_weight: ClassWeight,
    #[serde(default)]
    pub hyperparameters: HyperOverrides,
}

impl ModelConfig {
    pub fn new(family: ModelFamily) -> Self {
        ModelConfig {
            family,
            name: None,
            class_weight: ClassWeight::None,
            hyperparameters: HyperOverrides::default(),
        }
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.family.name().to_string())
    }

    /// Spec with a seed derived from the master seed and the model name.
    pub fn spec(&self, master_seed: u64) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(self.family, derive_seed(master_seed, &format!("model-{}", self.name())))
            .with_class_weight(self.class_weight);
        self.hyperparameters.apply(&mut spec.hyperparameters);
        spec.hyperparameters.validate()?;
        Ok(spec)
    }
}

fn default_models() -> Vec<ModelConfig> {
    ModelFamily::ALL.into_iter().map(ModelConfig::new).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub impute: ImputeConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub resample: ResampleConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ModelConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: None,
            data: DataConfig::default(),
            prune: PruneConfig::default(),
            evaluation: EvaluationConfig::default(),
            impute: ImputeConfig::default(),
            select: SelectConfig::default(),
            resample: ResampleConfig::default(),
            models: default_models(),
        }
    }
}

/// The three fixed testing scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    /// Imbalanced training data.
    I,
    /// SMOTE to a 0.7 minority/majority ratio.
    II,
    /// SMOTE to 0.4, then under-sampling to 0.8.
    III,
}

impl ScenarioId {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            1 => Ok(ScenarioId::I),
            2 => Ok(ScenarioId::II),
            3 => Ok(ScenarioId::III),
            _ => Err(Error::Config(format!("unknown scenario {n}; expected 1, 2 or 3"))),
        }
    }

    pub fn number(self) -> u32 {
        match self {
            ScenarioId::I => 1,
            ScenarioId::II => 2,
            ScenarioId::III => 3,
        }
    }

    pub fn resample(self) -> ResampleConfig {
        match self {
            ScenarioId::I => ResampleConfig::none(),
            ScenarioId::II => ResampleConfig::smote(0.7),
            ScenarioId::III => ResampleConfig::combined(0.4, 0.8),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::I => "I",
            ScenarioId::II => "II",
            ScenarioId::III => "III",
        })
    }
}

impl PipelineConfig {
    /// Defaults with the scenario's resampling and the given seed.
    pub fn scenario(id: ScenarioId, seed: u64) -> Self {
        PipelineConfig {
            seed,
            resample: id.resample(),
            ..PipelineConfig::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        let p = &self.prune;
        if !(p.missing_threshold > 0.0 && p.missing_threshold <= 1.0) {
            return cfg(format!("prune.missing_threshold = {} outside (0, 1]", p.missing_threshold));
        }
        if !(p.correlation_threshold > 0.0 && p.correlation_threshold < 1.0) {
            return cfg(format!("prune.correlation_threshold = {} outside (0, 1)", p.correlation_threshold));
        }
        let e = &self.evaluation;
        match e.mode {
            EvalMode::Holdout if !(e.test_fraction > 0.0 && e.test_fraction < 1.0) => {
                return cfg(format!("evaluation.test_fraction = {} outside (0, 1)", e.test_fraction));
            }
            EvalMode::Kfold if e.k < 2 => return cfg(format!("evaluation.k = {} must be at least 2", e.k)),
            _ => {}
        }
        let i = &self.impute;
        if !(i.skew_threshold >= 0.0) {
            return cfg(format!("impute.skew_threshold = {} must be >= 0", i.skew_threshold));
        }
        if i.knn_k == 0 || i.mice_iterations == 0 {
            return cfg("impute.knn_k and impute.mice_iterations must be at least 1".into());
        }
        i.override_ids()?;
        let s = &self.select;
        if s.roster.is_empty() {
            return cfg("select.roster is empty".into());
        }
        let names: BTreeSet<&str> = s.roster.iter().map(|c| c.name.as_str()).collect();
        if names.len() != s.roster.len() {
            return cfg("select.roster names must be unique".into());
        }
        if s.vote_threshold == 0 || s.vote_threshold > s.roster.len() {
            return cfg(format!(
                "select.vote_threshold = {} outside 1..={}",
                s.vote_threshold,
                s.roster.len()
            ));
        }
        if !(s.keep_fraction > 0.0 && s.keep_fraction <= 1.0) {
            return cfg(format!("select.keep_fraction = {} outside (0, 1]", s.keep_fraction));
        }
        self.resample.validate()?;
        if self.models.is_empty() {
            return cfg("models is empty".into());
        }
        let names: BTreeSet<String> = self.models.iter().map(ModelConfig::name).collect();
        if names.len() != self.models.len() {
            return cfg("model names must be unique".into());
        }
        for m in &self.models {
            if !m.name().chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return cfg(format!("model name {:?} must be [A-Za-z0-9_-]", m.name()));
            }
            m.spec(self.seed).map_err(|e| Error::Config(format!("model {}: {e}", m.name())))?;
        }
        Ok(())
    }

    /// sha256 of the canonical JSON form, excluding the output directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.select.roster.len(), 12);
        assert_eq!(c.models.len(), 6);
    }

    #[test]
    fn sections_parse() {
        let c = PipelineConfig::from_toml_str(
            r#"
seed = 9

[data]
data_path = "a.data"
labels_path = "b.data"

[evaluation]
mode = "kfold"
k = 4

[impute]
method = "simple"
overrides = { "12" = "median", "40" = "forward" }

[resample]
scenario = "combined"
over_ratio = 0.4
under_ratio = 0.8

[[models]]
family = "regularized_boosting"
class_weight = { positive = 2.0 }
hyperparameters = { n_rounds = 50 }
"#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.evaluation.mode, EvalMode::Kfold);
        assert_eq!(c.impute.override_ids().unwrap()[&40], SimpleStrategy::Forward);
        assert_eq!(c.resample.label(), "combined_0.4_0.8");
        let spec = c.models[0].spec(c.seed).unwrap();
        assert_eq!(spec.hyperparameters.n_rounds, 50);
        assert_eq!(spec.class_weight, ClassWeight::Positive(2.0));
    }

    #[test]
    fn roster_entries_parse() {
        let c = PipelineConfig::from_toml_str(
            r#"
[select]
vote_threshold = 2

[[select.roster]]
name = "f"
kind = "f_score"

[[select.roster]]
name = "mi"
kind = "mutual_info"
n_bins = 8

[[select.roster]]
name = "sfs"
kind = "sfs"
estimator = "linear_svm"
direction = "backward"
cv_folds = 3

[[select.roster]]
name = "l"
kind = "lasso"
lambda = { for_count = 1.0 }
"#,
        )
        .unwrap();
        assert_eq!(c.select.roster.len(), 4);
        assert_eq!(c.select.roster[1].kind, crate::featsel::SelectorKind::MutualInfo { n_bins: 8 });
        let bad = "[[select.roster]]\nname = \"mi\"\nkind = \"mutual_info\"\nbins = 8";
        assert!(PipelineConfig::from_toml_str(bad).is_err());
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_config_errors() {
        for text in [
            "colour = 1",
            "[prune]\nmissing = 0.5",
            "[prune]\ncorrelation_threshold = 1.0",
            "[evaluation]\ntest_fraction = 0.0",
            "[resample]\nscenario = \"smote\"",
            "[resample]\nscenario = \"smote\"\nover_ratio = 1.5",
            "[resample]\nscenario = \"bogus\"",
            "[select]\nvote_threshold = 13",
            "[impute]\noverrides = { \"x\" = \"mean\" }",
            "[[models]]\nfamily = \"logistic\"\nhyperparameters = { epochs = 0 }",
            "[[models]]\nfamily = \"logistic\"\n[[models]]\nfamily = \"logistic\"",
        ] {
            match PipelineConfig::from_toml_str(text) {
                Err(Error::Config(_)) => {}
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn scenarios_and_digest() {
        assert!(ScenarioId::from_number(4).is_err());
        let three = PipelineConfig::scenario(ScenarioId::III, 1);
        assert_eq!(three.resample.label(), "combined_0.4_0.8");
        assert_eq!(PipelineConfig::scenario(ScenarioId::II, 1).resample.label(), "smote_0.7");
        assert_eq!(three.digest(), PipelineConfig::scenario(ScenarioId::III, 1).digest());
        assert_ne!(three.digest(), PipelineConfig::scenario(ScenarioId::III, 2).digest());
        let mut moved = three.clone();
        moved.output_dir = Some("elsewhere".into());
        assert_eq!(three.digest(), moved.digest());
    }
}
