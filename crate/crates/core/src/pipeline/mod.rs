//! End-to-end scenario runner: load, EDA, prune, split, scale, impute,
//! select, resample, train and evaluate.
//!
//! Every fitted quantity comes from the training partition. The test
//! partition is fingerprinted right after imputation, when it reaches its
//! final form, and again as it enters evaluation; a mismatch aborts the run.

mod config;
mod report;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::{column_stats, load_secom, missing_summary, Dataset, MissingSummary};
use crate::error::{Error, Result};
use crate::featsel::{run_roster, vote, FeatureVoteLedger, SelectorDecision};
use crate::impute::{
    assign_simple_strategies, fit_mice, knn_impute, refine_strategies, simple_impute, ImputeLog, KnnImputeParams,
    MiceParams, SimpleImputePlan,
};
use crate::metrics::{confusion, metric_set, roc_curve, ConfusionMatrix, MetricSet, RocCurve};
use crate::models::{train, ModelFamily, TrainedModel};
use crate::preprocess::{
    apply_scaler, drop_constant, drop_correlated, drop_high_missing, fit_scaler, stratified_kfold, stratified_split,
    DropLog, SplitPlan,
};
use crate::resample::{combined_resample, smote, ResamplePlan, SmoteParams};
use crate::rng::derive_seed;

pub use config::{
    DataConfig, EvalMode, EvaluationConfig, HyperOverrides, ImputeConfig, ImputeMethod, ModelConfig, PipelineConfig,
    PruneConfig, ResampleConfig, ResampleScenario, ScenarioId, SelectConfig,
};
pub use report::{emit_report, report_text, ReportFormat};

/// Probability cut used for the confusion matrix.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// sha256 over row count, labels and the bit patterns of every cell.
pub fn partition_digest(d: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((d.n_rows() as u64).to_le_bytes());
    h.update((d.n_cols() as u64).to_le_bytes());
    for &id in d.column_ids() {
        h.update((id as u64).to_le_bytes());
    }
    h.update(&d.labels);
    for &v in d.features.raw_cells() {
        let bits = if v.is_nan() { f64::NAN.to_bits() } else { v.to_bits() };
        h.update(bits.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Default)]
struct Clock {
    timings: Vec<StageTiming>,
}

impl Clock {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        let seconds = t.elapsed().as_secs_f64();
        log::info!("stage {stage} took {seconds:.3}s");
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdaSummary {
    pub n_rows: usize,
    pub n_cols: usize,
    pub negatives: usize,
    pub positives: usize,
    pub missing: MissingSummary,
    pub constant_columns: usize,
    /// Columns over the configured missing threshold.
    pub high_missing_columns: usize,
}

pub fn eda(d: &Dataset, missing_threshold: f64) -> EdaSummary {
    let stats = column_stats(d);
    let (negatives, positives) = d.class_counts();
    EdaSummary {
        n_rows: d.n_rows(),
        n_cols: d.n_cols(),
        negatives,
        positives,
        missing: missing_summary(d),
        constant_columns: stats.iter().filter(|s| s.is_constant).count(),
        high_missing_columns: stats.iter().filter(|s| s.missing_fraction > missing_threshold).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneSummary {
    pub columns_before: usize,
    pub high_missing: usize,
    pub constant: usize,
    pub correlated: usize,
    pub columns_after: usize,
    /// Missing cells left in the surviving columns.
    pub residual_missing: MissingSummary,
}

#[derive(Debug, Clone)]
pub struct Pruned {
    pub data: Dataset,
    pub logs: Vec<DropLog>,
    pub summary: PruneSummary,
}

/// High-missing, then constant, then correlated columns, on the full table.
pub fn prune(cfg: &PruneConfig, d: &Dataset) -> Result<Pruned> {
    let (a, missing) = drop_high_missing(d, cfg.missing_threshold)?;
    let (b, constant) = drop_constant(&a)?;
    let (data, correlated) = drop_correlated(&b, cfg.correlation_threshold)?;
    let summary = PruneSummary {
        columns_before: d.n_cols(),
        high_missing: missing.len(),
        constant: constant.len(),
        correlated: correlated.len(),
        columns_after: data.n_cols(),
        residual_missing: missing_summary(&data),
    };
    Ok(Pruned {
        data,
        logs: vec![missing, constant, correlated],
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputeSummary {
    pub method: ImputeMethod,
    pub train_filled: usize,
    pub test_filled: usize,
    pub fallbacks: usize,
    /// Override columns that were present and imputed by their own strategy.
    pub overrides_applied: Vec<usize>,
    /// Override columns that no longer exist after pruning.
    pub overrides_ignored: Vec<usize>,
    /// Columns whose mean/median strategy the refinement pass switched.
    pub toggled: Vec<usize>,
}

/// Train and test partitions after scaling and imputation.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub train: Dataset,
    pub test: Dataset,
    /// Digest of the raw test rows right after splitting.
    pub split_digest: String,
    /// Digest of the test partition in its final (scaled, imputed) form.
    pub test_digest: String,
    /// Columns constant or empty on the training rows, removed before scaling.
    pub train_degenerate: Vec<usize>,
    pub impute: ImputeSummary,
}

fn copy_columns(dst: &mut Dataset, src: &Dataset, ids: &[usize]) -> Result<()> {
    for &id in ids {
        let c = dst.features.column_index(id).ok_or(Error::UnknownColumn(id))?;
        let s = src.features.column_index(id).ok_or(Error::UnknownColumn(id))?;
        for r in 0..dst.n_rows() {
            dst.features.set(r, c, Some(src.features.raw(r, s)));
        }
    }
    Ok(())
}

struct Imputed {
    train: Dataset,
    test: Dataset,
    train_log: ImputeLog,
    test_log: ImputeLog,
}

fn impute_once(cfg: &ImputeConfig, plan: &SimpleImputePlan, simple_ids: &[usize], train: &Dataset, test: &Dataset, seed: u64) -> Result<Imputed> {
    let (mut tr, mut te, mut tr_log, mut te_log) = match cfg.method {
        ImputeMethod::Simple => {
            let (tr, a) = simple_impute(plan, train)?;
            let (te, b) = simple_impute(plan, test)?;
            return Ok(Imputed {
                train: tr,
                test: te,
                train_log: a,
                test_log: b,
            });
        }
        ImputeMethod::Knn => {
            let p = KnnImputeParams { k: cfg.knn_k };
            let (tr, a) = knn_impute(&p, train, train)?;
            let (te, b) = knn_impute(&p, train, test)?;
            (tr, te, a, b)
        }
        ImputeMethod::Mice => {
            let p = MiceParams {
                n_iterations: cfg.mice_iterations,
                seed,
                noise_mode: cfg.mice_noise,
                ..MiceParams::default()
            };
            let model = fit_mice(&p, train, &[test])?;
            let (tr, a) = model.apply(train)?;
            let (te, b) = model.apply(test)?;
            (tr, te, a, b)
        }
    };
    if !simple_ids.is_empty() {
        let (str_, a) = simple_impute(plan, train)?;
        let (ste, b) = simple_impute(plan, test)?;
        copy_columns(&mut tr, &str_, simple_ids)?;
        copy_columns(&mut te, &ste, simple_ids)?;
        let keep = |log: &mut ImputeLog, simple: ImputeLog| {
            log.entries.retain(|e| !simple_ids.contains(&e.column_id));
            log.entries
                .extend(simple.entries.into_iter().filter(|e| simple_ids.contains(&e.column_id)));
            log.entries.sort_by_key(|e| (e.row, e.column_id));
        };
        keep(&mut tr_log, a);
        keep(&mut te_log, b);
    }
    Ok(Imputed {
        train: tr,
        test: te,
        train_log: tr_log,
        test_log: te_log,
    })
}

/// Imputes both partitions with parameters fitted on `train`. Columns listed
/// in the overrides use their simple strategy whatever the method.
pub fn impute(cfg: &ImputeConfig, train: &Dataset, test: &Dataset, seed: u64) -> Result<(Dataset, Dataset, ImputeSummary)> {
    train.require_fit_partition("impute")?;
    let present: BTreeSet<usize> = train.column_ids().iter().copied().collect();
    let overrides = cfg.override_ids()?;
    let (applied, ignored): (Vec<usize>, Vec<usize>) = overrides.keys().partition(|id| present.contains(id));
    let before = column_stats(train);
    let mut plan = assign_simple_strategies(&before, cfg.skew_threshold);
    for &id in &applied {
        plan.set_strategy(id, overrides[&id], train)?;
    }
    let simple_ids: Vec<usize> = match cfg.method {
        ImputeMethod::Simple => train.column_ids().to_vec(),
        _ => applied.clone(),
    };
    let mut out = impute_once(cfg, &plan, &simple_ids, train, test, seed)?;
    let mut toggled = Vec::new();
    if cfg.refine && !simple_ids.is_empty() {
        let pick = |stats: Vec<crate::dataset::ColumnStats>| -> Vec<_> {
            stats.into_iter().filter(|s| simple_ids.contains(&s.column_id)).collect()
        };
        let after = pick(column_stats(&out.train));
        toggled = refine_strategies(&mut plan, &pick(before), &after, train)?;
        if !toggled.is_empty() {
            out = impute_once(cfg, &plan, &simple_ids, train, test, seed)?;
        }
    }
    let fallbacks = out.train_log.fallbacks() + out.test_log.fallbacks();
    let summary = ImputeSummary {
        method: cfg.method,
        train_filled: out.train_log.entries.len(),
        test_filled: out.test_log.entries.len(),
        fallbacks,
        overrides_applied: applied,
        overrides_ignored: ignored,
        toggled,
    };
    out.train.require_complete()?;
    out.test.require_complete()?;
    Ok((out.train, out.test, summary))
}

/// Split plan for the configured evaluation mode.
pub fn split_plan(cfg: &PipelineConfig, d: &Dataset) -> Result<SplitPlan> {
    let seed = derive_seed(cfg.seed, "split");
    match cfg.evaluation.mode {
        EvalMode::Holdout => stratified_split(d, cfg.evaluation.test_fraction, seed),
        EvalMode::Kfold => stratified_kfold(d, cfg.evaluation.k, seed),
    }
}

/// Holdout plans, one per evaluation fold.
pub fn fold_plans(cfg: &PipelineConfig, d: &Dataset) -> Result<Vec<SplitPlan>> {
    let plan = split_plan(cfg, d)?;
    match cfg.evaluation.mode {
        EvalMode::Holdout => Ok(vec![plan]),
        EvalMode::Kfold => (0..plan.n_folds()).map(|f| plan.fold(f)).collect(),
    }
}

/// Split, scale and impute one fold of the pruned table.
pub fn prepare(cfg: &PipelineConfig, pruned: &Dataset, plan: &SplitPlan) -> Result<PreparedFold> {
    prepare_timed(cfg, pruned, plan, &mut Clock::default())
}

fn prepare_timed(cfg: &PipelineConfig, pruned: &Dataset, plan: &SplitPlan, clock: &mut Clock) -> Result<PreparedFold> {
    let (train_raw, test_raw, split_digest, degenerate) = clock.run("split", || {
        let (train_raw, test_raw) = plan.apply(pruned);
        let split_digest = partition_digest(&test_raw);
        let degenerate: Vec<usize> = column_stats(&train_raw)
            .into_iter()
            .filter(|s| s.is_constant || s.n_present == 0)
            .map(|s| s.column_id)
            .collect();
        if degenerate.len() == pruned.n_cols() {
            return Err(Error::NoFeaturesRemain("removing columns degenerate on the training rows".into()));
        }
        Ok((train_raw, test_raw, split_digest, degenerate))
    })?;
    let (train_s, test_s) = clock.run("scale", || {
        let keep: Vec<usize> = train_raw
            .column_ids()
            .iter()
            .copied()
            .filter(|id| !degenerate.contains(id))
            .collect();
        let train_k = train_raw.select_column_ids(&keep)?;
        let test_k = test_raw.select_column_ids(&keep)?;
        let scaler = fit_scaler(&train_k)?;
        Ok((apply_scaler(&scaler, &train_k)?, apply_scaler(&scaler, &test_k)?))
    })?;
    let (train, test, summary) = clock.run("impute", || impute(&cfg.impute, &train_s, &test_s, derive_seed(cfg.seed, "impute")))?;
    let test_digest = partition_digest(&test);
    Ok(PreparedFold {
        train,
        test,
        split_digest,
        test_digest,
        train_degenerate: degenerate,
        impute: summary,
    })
}

/// Runs the selector roster on the training partition and votes.
pub fn select(cfg: &PipelineConfig, train: &Dataset) -> Result<(FeatureVoteLedger, Vec<SelectorDecision>)> {
    let s = &cfg.select;
    let decisions = run_roster(train, &s.roster, s.keep_fraction, derive_seed(cfg.seed, "select"))?;
    let ledger = vote(train.column_ids(), &decisions, s.vote_threshold)?;
    if ledger.selected.is_empty() {
        return Err(Error::NoFeaturesRemain(format!(
            "feature voting at threshold {}",
            s.vote_threshold
        )));
    }
    Ok((ledger, decisions))
}

/// Resamples the training partition; `None` leaves it untouched.
pub fn resample(cfg: &ResampleConfig, train: &Dataset, master_seed: u64) -> Result<(Dataset, Option<ResamplePlan>)> {
    train.require_fit_partition("resample")?;
    let seed = derive_seed(master_seed, "resample");
    let missing = |name: &str| Error::Config(format!("resample.{name} missing"));
    match cfg.scenario {
        ResampleScenario::None => Ok((train.clone(), None)),
        ResampleScenario::Smote => {
            let p = SmoteParams {
                target_ratio: cfg.over_ratio.ok_or_else(|| missing("over_ratio"))?,
                k_neighbors: cfg.k_neighbors,
                seed,
            };
            let (d, plan) = smote(train, &p)?;
            Ok((d, Some(plan)))
        }
        ResampleScenario::Combined => {
            let over = cfg.over_ratio.ok_or_else(|| missing("over_ratio"))?;
            let (d, plan) = combined_resample(train, over, cfg.under_ratio, cfg.k_neighbors, seed)?;
            Ok((d, Some(plan)))
        }
    }
}

/// Trains every configured model (in parallel); output follows the config.
pub fn train_models(cfg: &PipelineConfig, train_set: &Dataset) -> Result<Vec<(String, TrainedModel)>> {
    cfg.models
        .par_iter()
        .map(|m| {
            let spec = m.spec(cfg.seed)?;
            let t = Instant::now();
            let model = train(&spec, train_set)?;
            log::info!("model {} trained in {:.2?}", m.name(), t.elapsed());
            Ok((m.name(), model))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelResult {
    pub name: String,
    pub family: ModelFamily,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub roc: RocCurve,
}

impl ModelResult {
    pub fn auc(&self) -> f64 {
        self.roc.auc
    }
}

/// Scores `test` with every model and computes the metrics.
pub fn evaluate(models: &[(String, TrainedModel)], test: &Dataset) -> Result<Vec<ModelResult>> {
    models
        .iter()
        .map(|(name, m)| {
            let rows = test.select_column_ids(&m.column_ids)?;
            let scores = m.predict_scores(&rows.features)?;
            let c = confusion(&test.labels, &scores, DECISION_THRESHOLD)?;
            Ok(ModelResult {
                name: name.clone(),
                family: m.spec.family,
                confusion: c,
                metrics: metric_set(&c),
                roc: roc_curve(&test.labels, &scores)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldOutcome {
    /// `None` for a holdout run.
    pub fold: Option<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub split_digest: String,
    pub test_digest: String,
    pub train_degenerate: Vec<usize>,
    pub impute: ImputeSummary,
    pub ledger: FeatureVoteLedger,
    pub resample: Option<ResamplePlan>,
    /// `(negatives, positives)` the models were trained on.
    pub trained_on: (usize, usize),
    pub models: Vec<ModelResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanMetrics {
    pub name: String,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub far: f64,
    pub auc: f64,
}

/// Published values shown next to a run for comparison; never a pass/fail gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceValues {
    pub model: String,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub far: f64,
    pub auc: f64,
}

impl ReferenceValues {
    pub fn scenario_three() -> Self {
        ReferenceValues {
            model: ModelFamily::RegularizedBoosting.name().into(),
            balanced_accuracy: 0.81,
            precision: 0.66,
            recall: 0.96,
            far: 0.03,
            auc: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    pub input_digest: String,
    pub eda: EdaSummary,
    pub prune: PruneSummary,
    pub drop_logs: Vec<DropLog>,
    pub mode: EvalMode,
    pub folds: Vec<FoldOutcome>,
    /// Per-model means over the folds (k-fold mode only).
    pub mean: Option<Vec<MeanMetrics>>,
    pub reference: Option<ReferenceValues>,
    /// Wall-clock times; kept out of the emitted files.
    pub timings: Vec<StageTiming>,
}

impl EvalReport {
    /// The single fold of a holdout run, or the first fold.
    pub fn primary(&self) -> &FoldOutcome {
        &self.folds[0]
    }

    /// Result for `name` in the first fold.
    pub fn model(&self, name: &str) -> Option<&ModelResult> {
        self.primary().models.iter().find(|m| m.name == name)
    }

    /// Mean over folds of a per-model quantity.
    pub fn fold_mean(&self, name: &str, f: impl Fn(&ModelResult) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .folds
            .iter()
            .filter_map(|fo| fo.models.iter().find(|m| m.name == name).map(&f))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn mean_metrics(cfg: &PipelineConfig, folds: &[FoldOutcome]) -> Vec<MeanMetrics> {
    cfg.models
        .iter()
        .map(|m| {
            let name = m.name();
            let rs: Vec<&ModelResult> = folds
                .iter()
                .filter_map(|f| f.models.iter().find(|r| r.name == name))
                .collect();
            let mean = |g: &dyn Fn(&ModelResult) -> f64| rs.iter().map(|r| g(r)).sum::<f64>() / rs.len() as f64;
            MeanMetrics {
                balanced_accuracy: mean(&|r| r.metrics.balanced_accuracy),
                precision: mean(&|r| r.metrics.precision),
                recall: mean(&|r| r.metrics.recall),
                far: mean(&|r| r.metrics.far),
                auc: mean(&|r| r.roc.auc),
                name,
            }
        })
        .collect()
}

/// Loads the configured SECOM files.
pub fn load(cfg: &PipelineConfig) -> Result<Dataset> {
    load_secom(&cfg.data.data_path, &cfg.data.labels_path).map_err(|e| e.in_stage("load"))
}

/// Runs `cfg` once per resampling variant on an in-memory table. Everything
/// up to feature selection is shared, since resampling comes after it; each
/// report equals what `run_on` gives for `cfg` with that variant.
pub fn run_variants(cfg: &PipelineConfig, data: &Dataset, variants: &[ResampleConfig]) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    for v in variants {
        v.validate()?;
    }
    let mut clock = Clock::default();
    let input_digest = partition_digest(data);
    let eda_summary = clock.run("eda", || Ok(eda(data, cfg.prune.missing_threshold)))?;
    let pruned = clock.run("prune", || prune(&cfg.prune, data))?;
    let plans = clock.run("split", || fold_plans(cfg, &pruned.data))?;
    let mut per_variant: Vec<Vec<FoldOutcome>> = vec![Vec::new(); variants.len()];
    for (f, plan) in plans.iter().enumerate() {
        let prepared = prepare_timed(cfg, &pruned.data, plan, &mut clock)?;
        let (ledger, _) = clock.run("select", || select(cfg, &prepared.train))?;
        let train_sel = prepared.train.select_column_ids(&ledger.selected).map_err(|e| e.in_stage("select"))?;
        for (v, variant) in variants.iter().enumerate() {
            let (train_rs, plan_rs) = clock.run("resample", || resample(variant, &train_sel, cfg.seed))?;
            let models = clock.run("train", || train_models(cfg, &train_rs))?;
            let results = clock.run("evaluate", || {
                if partition_digest(&prepared.test) != prepared.test_digest {
                    return Err(Error::Leakage("test partition changed between imputation and evaluation"));
                }
                evaluate(&models, &prepared.test)
            })?;
            per_variant[v].push(FoldOutcome {
                fold: (cfg.evaluation.mode == EvalMode::Kfold).then_some(f),
                n_train: prepared.train.n_rows(),
                n_test: prepared.test.n_rows(),
                split_digest: prepared.split_digest.clone(),
                test_digest: prepared.test_digest.clone(),
                train_degenerate: prepared.train_degenerate.clone(),
                impute: prepared.impute.clone(),
                ledger: ledger.clone(),
                resample: plan_rs,
                trained_on: train_rs.class_counts(),
                models: results,
            });
        }
    }
    Ok(variants
        .iter()
        .zip(per_variant)
        .map(|(variant, folds)| {
            let mut c = cfg.clone();
            c.resample = variant.clone();
            EvalReport {
                scenario: variant.label(),
                seed: cfg.seed,
                config_digest: c.digest(),
                input_digest: input_digest.clone(),
                eda: eda_summary.clone(),
                prune: pruned.summary.clone(),
                drop_logs: pruned.logs.clone(),
                mode: cfg.evaluation.mode,
                mean: (cfg.evaluation.mode == EvalMode::Kfold).then(|| mean_metrics(cfg, &folds)),
                folds,
                reference: None,
                timings: clock.timings.clone(),
            }
        })
        .collect())
}

/// Runs `cfg` on an in-memory table.
pub fn run_on(cfg: &PipelineConfig, data: &Dataset) -> Result<EvalReport> {
    Ok(run_variants(cfg, data, std::slice::from_ref(&cfg.resample))?.remove(0))
}

/// Validates `cfg`, loads its data files and runs every stage.
pub fn run_scenario(cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let data = load(cfg)?;
    run_on(cfg, &data)
}

/// Runs a fixed scenario on the SECOM files in `data` and writes every
/// report file into `out_dir`.
pub fn reproduce(
    id: ScenarioId,
    seed: u64,
    data: &DataConfig,
    out_dir: &Path,
) -> Result<(EvalReport, Vec<std::path::PathBuf>)> {
    let cfg = PipelineConfig {
        data: data.clone(),
        ..PipelineConfig::default()
    };
    reproduce_with(&cfg, id, seed, out_dir)
}

/// As [`reproduce`], but starting from `base` instead of the defaults. Only
/// the seed, the resampling variant and the output directory are replaced.
pub fn reproduce_with(
    base: &PipelineConfig,
    id: ScenarioId,
    seed: u64,
    out_dir: &Path,
) -> Result<(EvalReport, Vec<std::path::PathBuf>)> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.resample = id.resample();
    cfg.output_dir = Some(out_dir.to_path_buf());
    let mut report = run_scenario(&cfg)?;
    report.scenario = format!("{id} ({})", report.scenario);
    if id == ScenarioId::III {
        report.reference = Some(ReferenceValues::scenario_three());
    }
    let files = emit_report(&report, out_dir, &ReportFormat::all()).map_err(|e| e.in_stage("report"))?;
    Ok((report, files))
}

#[cfg(test)]
mod tests;
