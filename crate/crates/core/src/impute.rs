//! Missing-value imputation: per-column simple strategies, k-nearest-neighbour
//! averaging and chained-equation regression.
//!
//! Every imputer is fitted on a training dataset and applied to a target
//! dataset; fitted quantities never depend on the target rows.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{column_stats, ColumnStats, Dataset};
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimpleStrategy {
    Mean,
    Median,
    MostFrequent,
    Forward,
    Backward,
    LinearInterpolation,
}

impl fmt::Display for SimpleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimpleStrategy::Mean => "mean",
            SimpleStrategy::Median => "median",
            SimpleStrategy::MostFrequent => "most_frequent",
            SimpleStrategy::Forward => "forward",
            SimpleStrategy::Backward => "backward",
            SimpleStrategy::LinearInterpolation => "linear_interpolation",
        })
    }
}

impl std::str::FromStr for SimpleStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mean" => SimpleStrategy::Mean,
            "median" => SimpleStrategy::Median,
            "most_frequent" => SimpleStrategy::MostFrequent,
            "forward" => SimpleStrategy::Forward,
            "backward" => SimpleStrategy::Backward,
            "linear_interpolation" => SimpleStrategy::LinearInterpolation,
            other => return Err(Error::invalid(format!("unknown strategy {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnImpute {
    pub column_id: usize,
    pub strategy: SimpleStrategy,
    /// Fitted fill value (mean, median or mode); the boundary fallback for
    /// row-order strategies is the training mean. `None` for a column with no
    /// present training values.
    pub fill: Option<f64>,
    pub fallback: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleImputePlan {
    pub columns: Vec<ColumnImpute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeEntry {
    pub row: usize,
    pub column_id: usize,
    pub method: String,
    pub value: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeLog {
    pub entries: Vec<ImputeEntry>,
}

impl ImputeLog {
    pub fn fallbacks(&self) -> usize {
        self.entries.iter().filter(|e| e.fallback).count()
    }

    /// `row,column_id,method,value,fallback` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,column_id,method,value,fallback\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.row, e.column_id, e.method, e.value, e.fallback
            ));
        }
        out
    }
}

fn mode(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if best.is_none_or(|(_, n)| j - i > n) {
            best = Some((v[i], j - i));
        }
        i = j;
    }
    best.map(|(x, _)| x)
}

/// Median for `|skewness| > skew_threshold`, mean otherwise.
pub fn assign_simple_strategies(train_stats: &[ColumnStats], skew_threshold: f64) -> SimpleImputePlan {
    let columns = train_stats
        .iter()
        .map(|s| {
            let skewed = s.skewness.is_some_and(|k| k.abs() > skew_threshold);
            let (strategy, fill) = if skewed {
                (SimpleStrategy::Median, s.median)
            } else {
                (SimpleStrategy::Mean, s.mean)
            };
            ColumnImpute {
                column_id: s.column_id,
                strategy,
                fill,
                fallback: s.mean,
            }
        })
        .collect();
    SimpleImputePlan { columns }
}

impl SimpleImputePlan {
    /// Fits a plan with the given strategy for every column.
    pub fn uniform(train: &Dataset, strategy: SimpleStrategy) -> Result<Self> {
        train.require_fit_partition("simple_impute fit")?;
        let mut plan = assign_simple_strategies(&column_stats(train), f64::INFINITY);
        for id in train.column_ids().to_vec() {
            plan.set_strategy(id, strategy, train)?;
        }
        Ok(plan)
    }

    /// Per-column override, refitting the fill value on `train`.
    pub fn set_strategy(&mut self, column_id: usize, strategy: SimpleStrategy, train: &Dataset) -> Result<()> {
        train.require_fit_partition("simple_impute fit")?;
        let col = train
            .features
            .column_index(column_id)
            .ok_or(Error::UnknownColumn(column_id))?;
        let entry = self
            .columns
            .iter_mut()
            .find(|c| c.column_id == column_id)
            .ok_or(Error::UnknownColumn(column_id))?;
        let raw = train.features.column(col);
        let stats = crate::dataset::stats_of(column_id, &raw);
        entry.strategy = strategy;
        entry.fallback = stats.mean;
        entry.fill = match strategy {
            SimpleStrategy::Median => stats.median,
            SimpleStrategy::MostFrequent => mode(&raw),
            _ => stats.mean,
        };
        Ok(())
    }

    pub fn strategy_of(&self, column_id: usize) -> Option<SimpleStrategy> {
        self.columns
            .iter()
            .find(|c| c.column_id == column_id)
            .map(|c| c.strategy)
    }
}

fn neighbour_value(col: &[f64], row: usize, forward: bool) -> Option<(usize, f64)> {
    if forward {
        (0..row).rev().find(|&r| !col[r].is_nan()).map(|r| (r, col[r]))
    } else {
        (row + 1..col.len()).find(|&r| !col[r].is_nan()).map(|r| (r, col[r]))
    }
}

/// Fills every missing cell according to `plan`.
///
/// Row-order strategies look at the target's own rows: forward fill falls
/// back to backward fill and then the training mean, backward fill mirrors
/// that, and interpolation uses the training mean when either side is absent.
pub fn simple_impute(plan: &SimpleImputePlan, d: &Dataset) -> Result<(Dataset, ImputeLog)> {
    let specs = d
        .column_ids()
        .iter()
        .map(|&id| {
            plan.columns
                .iter()
                .find(|c| c.column_id == id)
                .ok_or(Error::UnknownColumn(id))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = d.clone();
    let mut entries = Vec::new();
    for (c, spec) in specs.iter().enumerate() {
        let col = d.features.column(c);
        if col.iter().all(|v| !v.is_nan()) {
            continue;
        }
        let fallback = spec
            .fallback
            .ok_or(Error::AllMissingColumn { column_id: spec.column_id })?;
        let fill = spec
            .fill
            .ok_or(Error::AllMissingColumn { column_id: spec.column_id })?;
        for r in (0..col.len()).filter(|&r| col[r].is_nan()) {
            let prev = neighbour_value(&col, r, true);
            let next = neighbour_value(&col, r, false);
            let (value, used_fallback) = match spec.strategy {
                SimpleStrategy::Mean | SimpleStrategy::Median | SimpleStrategy::MostFrequent => {
                    (fill, false)
                }
                SimpleStrategy::Forward => match (prev, next) {
                    (Some((_, v)), _) => (v, false),
                    (None, Some((_, v))) => (v, true),
                    (None, None) => (fallback, true),
                },
                SimpleStrategy::Backward => match (next, prev) {
                    (Some((_, v)), _) => (v, false),
                    (None, Some((_, v))) => (v, true),
                    (None, None) => (fallback, true),
                },
                SimpleStrategy::LinearInterpolation => match (prev, next) {
                    (Some((r0, v0)), Some((r1, v1))) => {
                        let t = (r - r0) as f64 / (r1 - r0) as f64;
                        (v0 + t * (v1 - v0), false)
                    }
                    _ => (fallback, true),
                },
            };
            out.features.set(r, c, Some(value));
            entries.push(ImputeEntry {
                row: r,
                column_id: spec.column_id,
                method: spec.strategy.to_string(),
                value,
                fallback: used_fallback,
            });
        }
    }
    entries.sort_by_key(|e| (e.row, e.column_id));
    out.record("simple_impute", "per-column strategies", Vec::new());
    Ok((out, ImputeLog { entries }))
}

/// Bounded refinement: columns whose skewness changes sign after imputation
/// switch once between mean and median. Returns the toggled column ids.
pub fn refine_strategies(
    plan: &mut SimpleImputePlan,
    before: &[ColumnStats],
    after: &[ColumnStats],
    train: &Dataset,
) -> Result<Vec<usize>> {
    let mut toggled = Vec::new();
    for (b, a) in before.iter().zip(after) {
        let (Some(sb), Some(sa)) = (b.skewness, a.skewness) else {
            continue;
        };
        if sb * sa >= 0.0 {
            continue;
        }
        let next = match plan.strategy_of(b.column_id) {
            Some(SimpleStrategy::Mean) => SimpleStrategy::Median,
            Some(SimpleStrategy::Median) => SimpleStrategy::Mean,
            _ => continue,
        };
        plan.set_strategy(b.column_id, next, train)?;
        toggled.push(b.column_id);
    }
    Ok(toggled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnImputeParams {
    pub k: usize,
}

impl Default for KnnImputeParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Mean over mutually present features of the squared difference, square-rooted.
/// `None` when the rows share no present feature.
pub fn masked_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut n = 0usize;
    let mut s = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        if !x.is_nan() && !y.is_nan() {
            let d = x - y;
            s += d * d;
            n += 1;
        }
    }
    (n > 0).then(|| (s / n as f64).sqrt())
}

/// k-nearest-neighbour imputation.
///
/// Each missing cell becomes the mean of that column over the `k` nearest
/// training rows that have the column present; rows lacking it are skipped in
/// favour of the next nearest. Distances use only mutually present features
/// and are normalised by their count, so inputs should already be scaled.
/// Cells with no eligible neighbour take the training column mean and are
/// flagged as fallbacks in the log.
pub fn knn_impute(p: &KnnImputeParams, train: &Dataset, target: &Dataset) -> Result<(Dataset, ImputeLog)> {
    train.require_fit_partition("knn_impute")?;
    if p.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if train.column_ids() != target.column_ids() {
        return Err(Error::ColumnMismatch {
            expected: train.column_ids().to_vec(),
            got: target.column_ids().to_vec(),
        });
    }
    let stats = column_stats(train);
    for s in &stats {
        if s.n_present < p.k {
            return Err(Error::invalid(format!(
                "column {} has {} present training rows, fewer than k = {}",
                s.column_id, s.n_present, p.k
            )));
        }
    }
    let means: Vec<f64> = stats.iter().map(|s| s.mean.unwrap_or(f64::NAN)).collect();
    let tf = &train.features;
    let n_train = tf.n_rows();

    let fills: Vec<Vec<(usize, f64, bool)>> = (0..target.n_rows())
        .into_par_iter()
        .map(|r| {
            let row = target.features.row(r);
            let missing: Vec<usize> = (0..row.len()).filter(|&c| row[c].is_nan()).collect();
            if missing.is_empty() {
                return Vec::new();
            }
            let mut cand: Vec<(f64, usize)> = (0..n_train)
                .filter_map(|t| masked_distance(row, tf.row(t)).map(|d| (d, t)))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            missing
                .into_iter()
                .map(|c| {
                    let mut sum = 0.0;
                    let mut found = 0usize;
                    for &(_, t) in &cand {
                        let v = tf.raw(t, c);
                        if !v.is_nan() {
                            sum += v;
                            found += 1;
                            if found == p.k {
                                break;
                            }
                        }
                    }
                    if found == 0 {
                        (c, means[c], true)
                    } else {
                        (c, sum / found as f64, false)
                    }
                })
                .collect()
        })
        .collect();

    let mut out = target.clone();
    let mut entries = Vec::new();
    for (r, row_fills) in fills.into_iter().enumerate() {
        for (c, value, fallback) in row_fills {
            out.features.set(r, c, Some(value));
            entries.push(ImputeEntry {
                row: r,
                column_id: target.column_ids()[c],
                method: if fallback { "mean" } else { "knn" }.to_string(),
                value,
                fallback,
            });
        }
    }
    out.record("knn_impute", format!("k={}", p.k), Vec::new());
    Ok((out, ImputeLog { entries }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialFill {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    DeterministicPrediction,
    GaussianResidualDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiceParams {
    pub n_iterations: usize,
    pub initial_fill: InitialFill,
    pub seed: u64,
    pub noise_mode: NoiseMode,
}

impl Default for MiceParams {
    fn default() -> Self {
        Self {
            n_iterations: 5,
            initial_fill: InitialFill::Mean,
            seed: 0,
            noise_mode: NoiseMode::DeterministicPrediction,
        }
    }
}

pub const MICE_RIDGE: f64 = 1e-8;

/// Least-squares model of one column on all the others (intercept first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRegression {
    pub intercept: f64,
    /// One coefficient per column; the modelled column's own entry is 0.
    pub coefficients: Vec<f64>,
    pub residual_sd: f64,
}

impl ColumnRegression {
    fn predict(&self, row: &[f64], skip: usize) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .enumerate()
                .filter(|(c, _)| *c != skip)
                .map(|(_, (x, b))| x * b)
                .sum::<f64>()
    }
}

/// One column's model for one sweep; `None` means the design was singular and
/// the sweep fell back to the initial fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStep {
    pub column: usize,
    pub model: Option<ColumnRegression>,
}

/// Chained-equation model fitted on training rows, replayable on any target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiceModel {
    pub params: MiceParams,
    pub column_ids: Vec<usize>,
    pub initial: Vec<f64>,
    pub sweeps: Vec<Vec<SweepStep>>,
}

/// Ridge-damped least squares `(AᵀA + ridge·I) β = Aᵀy` with an intercept column.
pub(crate) fn ridge_least_squares(rows: &[&[f64]], skip: usize, y: &[f64], ridge: f64) -> Option<ColumnRegression> {
    let n = rows.len();
    let p = rows.first()?.len();
    let a = DMatrix::from_fn(n, p + 1, |i, j| match j {
        0 => 1.0,
        _ if j - 1 == skip => 0.0,
        _ => rows[i][j - 1],
    });
    let yv = DVector::from_column_slice(y);
    let mut ata = a.tr_mul(&a);
    for i in 0..=p {
        ata[(i, i)] += ridge;
    }
    let aty = a.tr_mul(&yv);
    let beta = ata.cholesky()?.solve(&aty);
    if beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let resid = &yv - &a * &beta;
    let dof = if n > p + 1 { n - p - 1 } else { n };
    let residual_sd = (resid.norm_squared() / dof as f64).sqrt();
    Some(ColumnRegression {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        residual_sd,
    })
}

fn initial_values(train: &Dataset, fill: InitialFill) -> Result<Vec<f64>> {
    column_stats(train)
        .into_iter()
        .map(|s| {
            let v = match fill {
                InitialFill::Mean => s.mean,
                InitialFill::Median => s.median,
            };
            v.ok_or(Error::AllMissingColumn { column_id: s.column_id })
        })
        .collect()
}

struct SweepOutcome {
    steps: Vec<Vec<SweepStep>>,
    filled: Dataset,
    fell_back: BTreeMap<usize, bool>,
}

/// Runs the sweeps on `data`; with `replay` the stored models are reused,
/// otherwise each step is fitted on the rows where the column was observed.
fn run_sweeps(
    params: &MiceParams,
    initial: &[f64],
    columns: &[usize],
    data: &Dataset,
    replay: Option<&[Vec<SweepStep>]>,
) -> Result<SweepOutcome> {
    let n_rows = data.n_rows();
    let mask: Vec<Vec<bool>> = (0..data.n_cols())
        .map(|c| (0..n_rows).map(|r| data.features.is_missing(r, c)).collect())
        .collect();
    let mut filled = data.clone();
    for r in 0..n_rows {
        for (c, v) in filled.features.row_mut(r).iter_mut().enumerate() {
            if v.is_nan() {
                *v = initial[c];
            }
        }
    }
    let mut steps = Vec::with_capacity(params.n_iterations);
    let mut fell_back = BTreeMap::new();
    for sweep in 0..params.n_iterations {
        let mut sweep_steps = Vec::with_capacity(columns.len());
        for (pos, &j) in columns.iter().enumerate() {
            let model = match replay {
                Some(stored) => stored[sweep][pos].model.clone(),
                None => {
                    let obs: Vec<usize> = (0..n_rows).filter(|&r| !mask[j][r]).collect();
                    if obs.len() < 2 {
                        return Err(Error::invalid(format!(
                            "column {} has fewer than 2 observed rows",
                            data.column_ids()[j]
                        )));
                    }
                    let rows: Vec<&[f64]> = obs.iter().map(|&r| filled.features.row(r)).collect();
                    let y: Vec<f64> = obs.iter().map(|&r| filled.features.raw(r, j)).collect();
                    ridge_least_squares(&rows, j, &y, MICE_RIDGE)
                }
            };
            fell_back.insert(j, model.is_none());
            if model.is_none() {
                log::warn!(
                    "chained equations: singular design for column {} in sweep {sweep}, using initial fill",
                    data.column_ids()[j]
                );
            }
            let stream = (sweep as u64) << 32 | pos as u64;
            let mut rng = substream(params.seed, stream);
            for r in (0..n_rows).filter(|&r| mask[j][r]) {
                let value = match &model {
                    None => initial[j],
                    Some(m) => {
                        let mean = m.predict(filled.features.row(r), j);
                        match params.noise_mode {
                            NoiseMode::DeterministicPrediction => mean,
                            NoiseMode::GaussianResidualDraw => {
                                let normal = Normal::new(mean, m.residual_sd.max(0.0))
                                    .map_err(|e| Error::invalid(e.to_string()))?;
                                normal.sample(&mut rng)
                            }
                        }
                    }
                };
                filled.features.set(r, j, Some(value));
            }
            sweep_steps.push(SweepStep { column: j, model });
        }
        steps.push(sweep_steps);
    }
    Ok(SweepOutcome {
        steps,
        filled,
        fell_back,
    })
}

/// Fits chained-equation models on `train` for every column that has a
/// missing cell in `train` or in any of `targets`.
pub fn fit_mice(p: &MiceParams, train: &Dataset, targets: &[&Dataset]) -> Result<MiceModel> {
    train.require_fit_partition("mice_impute")?;
    if p.n_iterations == 0 {
        return Err(Error::invalid("n_iterations must be at least 1"));
    }
    if train.n_cols() < 2 {
        return Err(Error::invalid("chained equations need at least 2 columns"));
    }
    let initial = initial_values(train, p.initial_fill)?;
    let columns: Vec<usize> = (0..train.n_cols())
        .filter(|&c| {
            std::iter::once(train)
                .chain(targets.iter().copied())
                .any(|d| (0..d.n_rows()).any(|r| d.features.is_missing(r, c)))
        })
        .collect();
    let outcome = run_sweeps(p, &initial, &columns, train, None)?;
    Ok(MiceModel {
        params: *p,
        column_ids: train.column_ids().to_vec(),
        initial,
        sweeps: outcome.steps,
    })
}

impl MiceModel {
    /// Replays the fitted sweeps on `target`.
    pub fn apply(&self, target: &Dataset) -> Result<(Dataset, ImputeLog)> {
        if target.column_ids() != self.column_ids.as_slice() {
            return Err(Error::ColumnMismatch {
                expected: self.column_ids.clone(),
                got: target.column_ids().to_vec(),
            });
        }
        let columns: Vec<usize> = self.sweeps.first().map_or(Vec::new(), |s| s.iter().map(|st| st.column).collect());
        for c in 0..target.n_cols() {
            let has_missing = (0..target.n_rows()).any(|r| target.features.is_missing(r, c));
            if has_missing && !columns.contains(&c) {
                return Err(Error::invalid(format!(
                    "column {} has no fitted model",
                    self.column_ids[c]
                )));
            }
        }
        let outcome = run_sweeps(&self.params, &self.initial, &columns, target, Some(&self.sweeps))?;
        let mut entries = Vec::new();
        for r in 0..target.n_rows() {
            for c in 0..target.n_cols() {
                if target.features.is_missing(r, c) {
                    let fallback = outcome.fell_back.get(&c).copied().unwrap_or(false);
                    entries.push(ImputeEntry {
                        row: r,
                        column_id: self.column_ids[c],
                        method: if fallback { "initial" } else { "mice" }.to_string(),
                        value: outcome.filled.features.raw(r, c),
                        fallback,
                    });
                }
            }
        }
        let mut out = outcome.filled;
        out.record(
            "mice_impute",
            format!(
                "iterations={} seed={} noise={:?}",
                self.params.n_iterations, self.params.seed, self.params.noise_mode
            ),
            Vec::new(),
        );
        Ok((out, ImputeLog { entries }))
    }
}

/// Fits on `train` and imputes `target`.
pub fn mice_impute(p: &MiceParams, train: &Dataset, target: &Dataset) -> Result<(Dataset, ImputeLog)> {
    fit_mice(p, train, &[target])?.apply(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{stats_of, FeatureMatrix, Partition};
    use proptest::prelude::*;

    fn ds(rows: &[Vec<Option<f64>>]) -> Dataset {
        let n_cols = rows[0].len();
        let cells = rows.iter().flatten().copied().collect();
        let fm = FeatureMatrix::from_options(rows.len(), (0..n_cols).collect(), cells).unwrap();
        let labels = (0..rows.len()).map(|i| (i % 2) as u8).collect();
        Dataset::new(fm, labels).unwrap()
    }

    fn col(vals: &[Option<f64>]) -> Dataset {
        ds(&vals.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    #[test]
    fn strategy_rule() {
        let mut s = stats_of(0, &[1.0, 2.0, 3.0]);
        s.skewness = Some(3.2);
        let mut t = s.clone();
        t.skewness = Some(0.1);
        let mut u = s.clone();
        u.skewness = Some(-1.0);
        let plan = assign_simple_strategies(&[s, t, u], 1.0);
        let got: Vec<_> = plan.columns.iter().map(|c| c.strategy).collect();
        assert_eq!(got, vec![SimpleStrategy::Median, SimpleStrategy::Mean, SimpleStrategy::Mean]);
    }

    #[test]
    fn mean_and_median_fill() {
        let d = col(&[Some(1.0), None, Some(3.0)]);
        let plan = SimpleImputePlan::uniform(&d, SimpleStrategy::Mean).unwrap();
        let (out, log) = simple_impute(&plan, &d).unwrap();
        assert_eq!(out.features.column(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(log.entries.len(), 1);

        let d = col(&[Some(1.0), Some(1.0), Some(1.0), Some(100.0), None]);
        let plan = SimpleImputePlan::uniform(&d, SimpleStrategy::Median).unwrap();
        let (out, _) = simple_impute(&plan, &d).unwrap();
        assert_eq!(out.features.get(4, 0), Some(1.0));
    }

    #[test]
    fn most_frequent_fill() {
        let d = col(&[Some(2.0), Some(7.0), Some(7.0), Some(2.0), Some(3.0), None]);
        let plan = SimpleImputePlan::uniform(&d, SimpleStrategy::MostFrequent).unwrap();
        let (out, _) = simple_impute(&plan, &d).unwrap();
        assert_eq!(out.features.get(5, 0), Some(2.0));
    }

    #[test]
    fn row_order_strategies_and_fallbacks() {
        let d = col(&[None, Some(2.0), None, None, Some(8.0), None]);
        let fwd = SimpleImputePlan::uniform(&d, SimpleStrategy::Forward).unwrap();
        let (out, log) = simple_impute(&fwd, &d).unwrap();
        assert_eq!(out.features.column(0), vec![2.0, 2.0, 2.0, 2.0, 8.0, 8.0]);
        assert!(log.entries[0].fallback);
        assert!(!log.entries[1].fallback);

        let bwd = SimpleImputePlan::uniform(&d, SimpleStrategy::Backward).unwrap();
        let (out, _) = simple_impute(&bwd, &d).unwrap();
        assert_eq!(out.features.column(0), vec![2.0, 2.0, 8.0, 8.0, 8.0, 8.0]);

        let lin = SimpleImputePlan::uniform(&d, SimpleStrategy::LinearInterpolation).unwrap();
        let (out, _) = simple_impute(&lin, &d).unwrap();
        assert_eq!(out.features.column(0), vec![5.0, 2.0, 4.0, 6.0, 8.0, 5.0]);

        let lonely = col(&[None, None, Some(3.0)]);
        let plan = SimpleImputePlan::uniform(&lonely, SimpleStrategy::Forward).unwrap();
        let empty = col(&[None, None]);
        let (out, log) = simple_impute(&plan, &empty).unwrap();
        assert_eq!(out.features.column(0), vec![3.0, 3.0]);
        assert_eq!(log.fallbacks(), 2);
    }

    #[test]
    fn all_missing_training_column_errors() {
        let d = ds(&[vec![Some(1.0), None], vec![Some(2.0), None]]);
        let plan = assign_simple_strategies(&column_stats(&d), 1.0);
        assert!(matches!(
            simple_impute(&plan, &d),
            Err(Error::AllMissingColumn { column_id: 1 })
        ));
    }

    #[test]
    fn refinement_toggles_on_sign_flip() {
        let d = col(&[Some(0.0), Some(0.0), Some(1.0), None]);
        let mut plan = SimpleImputePlan::uniform(&d, SimpleStrategy::Mean).unwrap();
        let mut before = column_stats(&d);
        before[0].skewness = Some(-0.5);
        let after = column_stats(&d);
        let toggled = refine_strategies(&mut plan, &before, &after, &d).unwrap();
        assert_eq!(toggled, vec![0]);
        assert_eq!(plan.strategy_of(0), Some(SimpleStrategy::Median));
        assert_eq!(plan.columns[0].fill, Some(0.0));
    }

    #[test]
    fn knn_k1_copies_nearest() {
        let train = ds(&[
            vec![Some(0.0), Some(10.0)],
            vec![Some(1.0), Some(20.0)],
            vec![Some(5.0), Some(30.0)],
        ]);
        let target = ds(&[vec![Some(0.9), None]]);
        let (out, log) = knn_impute(&KnnImputeParams { k: 1 }, &train, &target).unwrap();
        assert_eq!(out.features.get(0, 1), Some(20.0));
        assert_eq!(log.entries[0].method, "knn");
    }

    /// Exhaustive oracle: enumerate all pairwise distances, sort, average.
    #[test]
    fn knn_toy_matches_enumeration() {
        let rows = vec![
            vec![Some(0.1), Some(0.2), None],
            vec![Some(0.4), None, Some(0.9)],
            vec![Some(0.3), Some(0.1), Some(0.5)],
            vec![Some(0.8), Some(0.7), Some(0.2)],
        ];
        let d = ds(&rows);
        let (out, _) = knn_impute(&KnnImputeParams { k: 2 }, &d, &d).unwrap();

        // row 0, column 2: candidates with column 2 present are rows 1, 2, 3.
        let dist = |a: &[Option<f64>], b: &[Option<f64>]| {
            let shared: Vec<(f64, f64)> = a
                .iter()
                .zip(b)
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .collect();
            (shared.iter().map(|(x, y)| (x - y).powi(2)).sum::<f64>() / shared.len() as f64).sqrt()
        };
        let mut c: Vec<(f64, usize)> = [1, 2, 3].iter().map(|&t| (dist(&rows[0], &rows[t]), t)).collect();
        c.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let expect = (rows[c[0].1][2].unwrap() + rows[c[1].1][2].unwrap()) / 2.0;
        // d(0,1) = 0.3, d(0,2) = sqrt((0.04+0.01)/2) = 0.158, d(0,3) = sqrt((0.49+0.25)/2) = 0.608
        assert_eq!((c[0].1, c[1].1), (2, 1));
        assert!((out.features.get(0, 2).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.7).abs() < 1e-12);

        // row 1, column 1: candidates rows 0, 2, 3.
        let mut c: Vec<(f64, usize)> = [0, 2, 3].iter().map(|&t| (dist(&rows[1], &rows[t]), t)).collect();
        c.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let expect = (rows[c[0].1][1].unwrap() + rows[c[1].1][1].unwrap()) / 2.0;
        assert!((out.features.get(1, 1).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn knn_all_missing_row_falls_back() {
        let train = ds(&[vec![Some(1.0), Some(4.0)], vec![Some(3.0), Some(8.0)]]);
        let target = ds(&[vec![None, None]]);
        let (out, log) = knn_impute(&KnnImputeParams { k: 1 }, &train, &target).unwrap();
        assert_eq!(out.features.row(0), &[2.0, 6.0]);
        assert_eq!(log.fallbacks(), 2);
    }

    #[test]
    fn knn_refuses_test_partition() {
        let d = ds(&[vec![Some(1.0)], vec![Some(2.0)]]).with_partition(Partition::Test);
        assert!(matches!(knn_impute(&KnnImputeParams { k: 1 }, &d, &d), Err(Error::Leakage(_))));
    }

    #[test]
    fn mice_noop_without_missing() {
        let d = ds(&[vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(5.0)], vec![Some(4.0), Some(1.0)]]);
        let (out, log) = mice_impute(&MiceParams::default(), &d, &d).unwrap();
        assert_eq!(out.features, d.features);
        assert!(log.entries.is_empty());
    }

    #[test]
    fn mice_recovers_exact_linear_relation() {
        let mut rows: Vec<Vec<Option<f64>>> =
            (0..12).map(|i| { let x = i as f64 * 0.37 - 1.0; vec![Some(x), Some(3.0 * x - 2.0)] }).collect();
        rows[5][1] = None;
        let d = ds(&rows);
        let (out, _) = mice_impute(&MiceParams::default(), &d, &d).unwrap();
        let x = rows[5][0].unwrap();
        assert!((out.features.get(5, 1).unwrap() - (3.0 * x - 2.0)).abs() < 1e-6);
    }

    /// One sweep from a mean fill equals sequential regression imputation,
    /// solved here by Gaussian elimination on the unregularised normal equations.
    #[test]
    fn mice_single_sweep_matches_regression_oracle() {
        let raw = [
            [Some(1.0), Some(2.0), Some(0.5)],
            [Some(2.0), None, Some(1.5)],
            [Some(3.0), Some(5.5), None],
            [None, Some(7.0), Some(2.0)],
            [Some(5.0), Some(11.0), Some(3.5)],
            [Some(6.0), Some(12.5), Some(2.5)],
            [Some(7.5), Some(15.0), Some(4.0)],
        ];
        let rows: Vec<Vec<Option<f64>>> = raw.iter().map(|r| r.to_vec()).collect();
        let d = ds(&rows);
        let params = MiceParams { n_iterations: 1, ..Default::default() };
        let (out, _) = mice_impute(&params, &d, &d).unwrap();

        let mut cur: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect();
        for j in 0..3 {
            let m = rows.iter().filter_map(|r| r[j]).sum::<f64>() / rows.iter().filter(|r| r[j].is_some()).count() as f64;
            for r in cur.iter_mut() { if r[j].is_nan() { r[j] = m; } }
        }
        for j in 0..3 {
            let obs: Vec<usize> = (0..rows.len()).filter(|&r| rows[r][j].is_some()).collect();
            let others: Vec<usize> = (0..3).filter(|&c| c != j).collect();
            let design = |cur: &Vec<Vec<f64>>, r: usize| {
                let mut v = vec![1.0];
                v.extend(others.iter().map(|&c| cur[r][c]));
                v
            };
            let p = others.len() + 1;
            let mut a = vec![vec![0.0; p + 1]; p];
            for &r in &obs {
                let x = design(&cur, r);
                for i in 0..p { for k in 0..p { a[i][k] += x[i] * x[k]; } a[i][p] += x[i] * cur[r][j]; }
            }
            for i in 0..p {
                let piv = a[i][i];
                for k in i..=p { a[i][k] /= piv; }
                for q in 0..p { if q != i { let f = a[q][i]; for k in i..=p { a[q][k] -= f * a[i][k]; } } }
            }
            let beta: Vec<f64> = (0..p).map(|i| a[i][p]).collect();
            for r in 0..rows.len() {
                if rows[r][j].is_none() {
                    cur[r][j] = design(&cur, r).iter().zip(&beta).map(|(x, b)| x * b).sum();
                }
            }
        }
        for r in 0..rows.len() {
            for c in 0..3 {
                assert!((out.features.raw(r, c) - cur[r][c]).abs() < 1e-6, "cell ({r},{c})");
            }
        }
    }

    #[test]
    fn mice_gaussian_mode_is_seeded() {
        let rows: Vec<Vec<Option<f64>>> = (0..20)
            .map(|i| {
                let x = (i as f64).sin();
                vec![Some(x), if i % 4 == 0 { None } else { Some(x * 2.0 + (i as f64 * 1.3).cos()) }]
            })
            .collect();
        let d = ds(&rows);
        let p = MiceParams { noise_mode: NoiseMode::GaussianResidualDraw, seed: 9, ..Default::default() };
        let a = mice_impute(&p, &d, &d).unwrap().0;
        let b = mice_impute(&p, &d, &d).unwrap().0;
        assert_eq!(a.features, b.features);
        let c = mice_impute(&MiceParams { seed: 10, ..p }, &d, &d).unwrap().0;
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn mice_coefficients_ignore_target_rows() {
        let rows: Vec<Vec<Option<f64>>> = (0..15)
            .map(|i| vec![Some(i as f64), if i % 3 == 0 { None } else { Some((i * i) as f64 * 0.1) }, Some((i as f64).sqrt())])
            .collect();
        let train = ds(&rows);
        let t1 = ds(&[vec![Some(1.0), None, Some(2.0)]]);
        let t2 = ds(&[vec![Some(50.0), None, Some(-9.0)]]);
        let m1 = fit_mice(&MiceParams::default(), &train, &[&t1]).unwrap();
        let m2 = fit_mice(&MiceParams::default(), &train, &[&t2]).unwrap();
        assert_eq!(m1, m2);
    }

    proptest! {
        #[test]
        fn imputers_preserve_present_cells(seed in any::<u64>(), method in 0usize..3) {
            use rand::Rng;
            let mut rng = crate::rng::seeded(seed);
            let rows: Vec<Vec<Option<f64>>> = (0..25).map(|_| (0..4).map(|_| {
                (rng.random::<f64>() > 0.15).then(|| rng.random::<f64>())
            }).collect()).collect();
            let mut rows = rows;
            for c in 0..4 { for r in 0..5 { rows[r][c] = Some(r as f64 * 0.1 + c as f64); } }
            let d = ds(&rows);
            let (out, _) = match method {
                0 => knn_impute(&KnnImputeParams { k: 3 }, &d, &d).unwrap(),
                1 => mice_impute(&MiceParams::default(), &d, &d).unwrap(),
                _ => simple_impute(&assign_simple_strategies(&column_stats(&d), 1.0), &d).unwrap(),
            };
            prop_assert_eq!(out.features.missing_count(), 0);
            for r in 0..25 { for c in 0..4 {
                if let Some(v) = rows[r][c] { prop_assert_eq!(out.features.raw(r, c).to_bits(), v.to_bits()); }
            }}
        }

        #[test]
        fn knn_with_all_neighbours_is_column_mean(seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::rng::seeded(seed);
            let train_rows: Vec<Vec<Option<f64>>> = (0..12).map(|_| (0..3).map(|_| Some(rng.random::<f64>())).collect()).collect();
            let train = ds(&train_rows);
            let target = ds(&[vec![Some(rng.random()), None, Some(rng.random())]]);
            let (out, _) = knn_impute(&KnnImputeParams { k: 12 }, &train, &target).unwrap();
            let mean = train_rows.iter().map(|r| r[1].unwrap()).sum::<f64>() / 12.0;
            prop_assert!((out.features.get(0, 1).unwrap() - mean).abs() < 1e-12);
        }
    }
}
