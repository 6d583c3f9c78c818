//! Column pruning, min/max/average scaling and stratified splitting.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{column_stats, pearson_pairwise, Dataset, Partition};
use crate::error::{Error, Result};
use crate::rng::{round_half_up, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    HighMissing,
    Constant,
    Correlated,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::HighMissing => "high_missing",
            DropReason::Constant => "constant",
            DropReason::Correlated => "correlated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub column_id: usize,
    /// Retained column that caused a correlated drop.
    pub kept_partner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropLog {
    pub reason: DropReason,
    pub parameter: f64,
    pub removed: Vec<DroppedColumn>,
}

impl DropLog {
    pub fn removed_ids(&self) -> Vec<usize> {
        self.removed.iter().map(|d| d.column_id).collect()
    }

    pub fn len(&self) -> usize {
        self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }
}

/// `column_id,reason,threshold,kept_partner` lines with a header.
pub fn drop_logs_csv(logs: &[DropLog]) -> String {
    let mut out = String::from("column_id,reason,threshold,kept_partner\n");
    for log in logs {
        for d in &log.removed {
            let partner = d.kept_partner.map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                d.column_id, log.reason, log.parameter, partner
            ));
        }
    }
    out
}

fn keep_columns(
    d: &Dataset,
    keep: &[usize],
    log: DropLog,
    what: &str,
) -> Result<(Dataset, DropLog)> {
    if keep.is_empty() {
        return Err(Error::NoFeaturesRemain(what.to_string()));
    }
    let mut out = d.select_columns(keep);
    out.record(
        what,
        format!("reason={} parameter={}", log.reason, log.parameter),
        log.removed_ids(),
    );
    Ok((out, log))
}

/// Removes columns whose missing fraction exceeds `threshold`.
pub fn drop_high_missing(d: &Dataset, threshold: f64) -> Result<(Dataset, DropLog)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "missing threshold {threshold} outside (0, 1]"
        )));
    }
    let stats = column_stats(d);
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for (c, s) in stats.iter().enumerate() {
        if s.missing_fraction > threshold {
            removed.push(DroppedColumn {
                column_id: s.column_id,
                kept_partner: None,
            });
        } else {
            keep.push(c);
        }
    }
    let log = DropLog {
        reason: DropReason::HighMissing,
        parameter: threshold,
        removed,
    };
    keep_columns(d, &keep, log, "drop_high_missing")
}

/// Removes constant and all-missing columns (both logged as constant).
pub fn drop_constant(d: &Dataset) -> Result<(Dataset, DropLog)> {
    let stats = column_stats(d);
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for (c, s) in stats.iter().enumerate() {
        if s.is_constant || s.n_present == 0 {
            removed.push(DroppedColumn {
                column_id: s.column_id,
                kept_partner: None,
            });
        } else {
            keep.push(c);
        }
    }
    let log = DropLog {
        reason: DropReason::Constant,
        parameter: 0.0,
        removed,
    };
    keep_columns(d, &keep, log, "drop_constant")
}

/// Greedy correlation pruning.
///
/// Columns are visited in ascending id order; a column is dropped when its
/// pairwise-complete |r| with an already kept column exceeds `threshold`, and
/// the first such kept column is logged as its partner.
pub fn drop_correlated(d: &Dataset, threshold: f64) -> Result<(Dataset, DropLog)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "correlation threshold {threshold} outside (0, 1)"
        )));
    }
    let cols = d.features.columns();
    let mut order: Vec<usize> = (0..d.n_cols()).collect();
    order.sort_by_key(|&c| d.column_ids()[c]);

    let mut kept: Vec<usize> = Vec::new();
    let mut removed = Vec::new();
    for &c in &order {
        let partner = kept.iter().copied().find(|&k| {
            pearson_pairwise(&cols[k], &cols[c]).is_some_and(|r| r.abs() > threshold)
        });
        match partner {
            Some(k) => removed.push(DroppedColumn {
                column_id: d.column_ids()[c],
                kept_partner: Some(d.column_ids()[k]),
            }),
            None => kept.push(c),
        }
    }
    kept.sort_unstable();
    let log = DropLog {
        reason: DropReason::Correlated,
        parameter: threshold,
        removed,
    };
    keep_columns(d, &kept, log, "drop_correlated")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleColumn {
    pub column_id: usize,
    pub min_x: f64,
    pub max_x: f64,
    pub ave_x: f64,
}

/// Per-column `Min(X)`, `Max(X)`, `Ave(X)` fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<ScaleColumn>,
}

impl ScalerParams {
    pub fn get(&self, column_id: usize) -> Option<&ScaleColumn> {
        self.columns.iter().find(|c| c.column_id == column_id)
    }
}

/// Fits the scaler over present training values. Constant columns are rejected.
pub fn fit_scaler(train: &Dataset) -> Result<ScalerParams> {
    train.require_fit_partition("fit_scaler")?;
    let columns = column_stats(train)
        .into_iter()
        .map(|s| match (s.min, s.max, s.mean) {
            (Some(min_x), Some(max_x), Some(ave_x)) if max_x > min_x => Ok(ScaleColumn {
                column_id: s.column_id,
                min_x,
                max_x,
                // the mean of nearly equal floats can land one ulp outside [min, max]
                ave_x: ave_x.clamp(min_x, max_x),
            }),
            (Some(_), Some(_), Some(_)) => Err(Error::ConstantColumn {
                column_id: s.column_id,
            }),
            _ => Err(Error::AllMissingColumn {
                column_id: s.column_id,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalerParams { columns })
}

/// `x̂ = 0.5 + (x − ave) / (max − min)`, unclamped; missing cells stay missing.
pub fn apply_scaler(p: &ScalerParams, d: &Dataset) -> Result<Dataset> {
    let cols = d
        .column_ids()
        .iter()
        .map(|&id| p.get(id).cloned().ok_or(Error::UnknownColumn(id)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = d.clone();
    for r in 0..out.n_rows() {
        for (v, sc) in out.features.row_mut(r).iter_mut().zip(&cols) {
            if !v.is_nan() {
                *v = 0.5 + (*v - sc.ave_x) / (sc.max_x - sc.min_x);
            }
        }
    }
    out.record("apply_scaler", "min_max_average", Vec::new());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_row_indices: Vec<usize>,
    pub test_row_indices: Vec<usize>,
    /// Per-row fold id for k-fold plans.
    pub fold_assignments: Option<Vec<usize>>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn n_folds(&self) -> usize {
        self.fold_assignments
            .as_ref()
            .map_or(0, |f| f.iter().max().map_or(0, |m| m + 1))
    }

    /// Holdout plan with fold `fold` as the test partition.
    pub fn fold(&self, fold: usize) -> Result<SplitPlan> {
        let folds = self
            .fold_assignments
            .as_ref()
            .ok_or_else(|| Error::invalid("split plan has no folds"))?;
        if fold >= self.n_folds() {
            return Err(Error::invalid(format!("fold {fold} out of range")));
        }
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..folds.len()).partition(|&r| folds[r] == fold);
        Ok(SplitPlan {
            train_row_indices: train,
            test_row_indices: test,
            fold_assignments: None,
            seed: self.seed,
        })
    }

    /// `(train, test)` datasets tagged with their partitions.
    pub fn apply(&self, d: &Dataset) -> (Dataset, Dataset) {
        let mut train = d
            .select_rows(&self.train_row_indices)
            .with_partition(Partition::Train);
        let mut test = d
            .select_rows(&self.test_row_indices)
            .with_partition(Partition::Test);
        train.record("split", format!("partition=train seed={}", self.seed), Vec::new());
        test.record("split", format!("partition=test seed={}", self.seed), Vec::new());
        (train, test)
    }
}

fn shuffled_class(d: &Dataset, class: u8, seed: u64) -> Vec<usize> {
    let mut idx = d.class_indices(class);
    idx.shuffle(&mut substream(seed, u64::from(class)));
    idx
}

/// Per-class seeded shuffle; `round(class_count × test_fraction)` of each class go to test.
pub fn stratified_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let idx = shuffled_class(d, class, seed);
        if idx.len() < 2 {
            return Err(Error::Class(format!(
                "class {class} has {} members, need at least 2",
                idx.len()
            )));
        }
        let n_test = round_half_up(idx.len() as f64 * test_fraction).min(idx.len());
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        train_row_indices: train,
        test_row_indices: test,
        fold_assignments: None,
        seed,
    })
}

/// Per-class seeded shuffle then round-robin fold assignment.
///
/// The round-robin continues across classes so fold sizes stay balanced.
/// The returned plan's train/test lists describe fold 0.
pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("k = {k}, need k >= 2")));
    }
    let (neg, pos) = d.class_counts();
    if neg.min(pos) < k {
        return Err(Error::Class(format!(
            "minority class has {} members, fewer than k = {k}",
            neg.min(pos)
        )));
    }
    let mut folds = vec![0usize; d.n_rows()];
    let mut next = 0usize;
    for class in [0u8, 1] {
        for r in shuffled_class(d, class, seed) {
            folds[r] = next % k;
            next += 1;
        }
    }
    let plan = SplitPlan {
        train_row_indices: Vec::new(),
        test_row_indices: Vec::new(),
        fold_assignments: Some(folds),
        seed,
    };
    let first = plan.fold(0)?;
    Ok(SplitPlan {
        train_row_indices: first.train_row_indices,
        test_row_indices: first.test_row_indices,
        ..plan
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMatrix;
    use proptest::prelude::*;

    fn ds_cols(cols: &[Vec<Option<f64>>], labels: Vec<u8>) -> Dataset {
        let n_rows = cols[0].len();
        let mut cells = Vec::new();
        for r in 0..n_rows {
            for c in cols {
                cells.push(c[r]);
            }
        }
        let fm = FeatureMatrix::from_options(n_rows, (0..cols.len()).collect(), cells).unwrap();
        Dataset::new(fm, labels).unwrap()
    }

    fn labels(n: usize, pos: usize) -> Vec<u8> {
        (0..n).map(|i| u8::from(i < pos)).collect()
    }

    fn some(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|&x| Some(x)).collect()
    }

    #[test]
    fn high_missing_rule() {
        let d = ds_cols(
            &[
                vec![Some(1.0), None, None, None],
                some(&[1.0, 2.0, 3.0, 4.0]),
            ],
            labels(4, 2),
        );
        let (out, log) = drop_high_missing(&d, 0.5).unwrap();
        assert_eq!(log.removed_ids(), vec![0]);
        assert_eq!(out.column_ids(), &[1]);
        let (out, log) = drop_high_missing(&d, 1.0).unwrap();
        assert!(log.is_empty());
        assert_eq!(out.n_cols(), 2);
        assert!(drop_high_missing(&d, 0.0).is_err());
    }

    #[test]
    fn constant_rule() {
        let d = ds_cols(
            &[
                some(&[5.0, 5.0, 5.0, 5.0]),
                some(&[1.0, 2.0, 3.0, 4.0]),
                vec![None; 4],
            ],
            labels(4, 2),
        );
        let (out, log) = drop_constant(&d).unwrap();
        assert_eq!(log.removed_ids(), vec![0, 2]);
        assert_eq!(out.column_ids(), &[1]);
        let (again, log2) = drop_constant(&out).unwrap();
        assert!(log2.is_empty());
        assert_eq!(again.features, out.features);

        let single = ds_cols(&[some(&[5.0, 5.0])], labels(2, 1));
        let err = drop_constant(&single).unwrap_err();
        assert!(err.to_string().contains("no features remain"));
    }

    #[test]
    fn correlated_keeps_earlier_copy() {
        let x = some(&[1.0, 2.0, 3.0, 5.0, 4.0]);
        let d = ds_cols(
            &[x.clone(), some(&[1.0, -1.0, 1.0, -1.0, 0.0]), x],
            labels(5, 2),
        );
        let (out, log) = drop_correlated(&d, 0.7).unwrap();
        assert_eq!(out.column_ids(), &[0, 1]);
        assert_eq!(log.removed[0].column_id, 2);
        assert_eq!(log.removed[0].kept_partner, Some(0));
        assert!(drop_logs_csv(&[log]).contains("2,correlated,0.7,0\n"));
    }

    #[test]
    fn orthogonal_columns_survive() {
        let d = ds_cols(
            &[some(&[1.0, -1.0, 1.0, -1.0]), some(&[1.0, 1.0, -1.0, -1.0])],
            labels(4, 2),
        );
        let (out, log) = drop_correlated(&d, 0.7).unwrap();
        assert!(log.is_empty());
        assert_eq!(out.n_cols(), 2);
    }

    #[test]
    fn scaler_examples() {
        let d = ds_cols(&[some(&[0.0, 1.0, 2.0])], labels(3, 1));
        let p = fit_scaler(&d).unwrap();
        assert_eq!(p.columns[0].min_x, 0.0);
        assert_eq!(p.columns[0].max_x, 2.0);
        assert_eq!(p.columns[0].ave_x, 1.0);
        let s = apply_scaler(&p, &d).unwrap();
        assert_eq!(s.features.column(0), vec![0.0, 0.5, 1.0]);

        let d = ds_cols(&[some(&[0.0, 0.0, 0.0, 4.0])], labels(4, 1));
        let s = apply_scaler(&fit_scaler(&d).unwrap(), &d).unwrap();
        assert_eq!(s.features.column(0), vec![0.25, 0.25, 0.25, 1.25]);
    }

    #[test]
    fn scaler_extrapolates_and_masks() {
        let train = ds_cols(&[vec![Some(0.0), None, Some(2.0)]], labels(3, 1));
        let p = fit_scaler(&train).unwrap();
        assert_eq!(p.columns[0].ave_x, 1.0);
        let test = ds_cols(&[vec![Some(-2.0), None]], labels(2, 1));
        let s = apply_scaler(&p, &test).unwrap();
        assert_eq!(s.features.get(0, 0), Some(-1.0));
        assert_eq!(s.features.get(1, 0), None);

        let constant = ds_cols(&[some(&[3.0, 3.0])], labels(2, 1));
        assert!(matches!(
            fit_scaler(&constant),
            Err(Error::ConstantColumn { column_id: 0 })
        ));
        let other = ds_cols(&[some(&[1.0]), some(&[1.0])], labels(1, 1));
        let other = other.select_column_ids(&[1]).unwrap();
        assert!(matches!(apply_scaler(&p, &other), Err(Error::UnknownColumn(1))));
    }

    #[test]
    fn scaler_refuses_test_partition() {
        let d = ds_cols(&[some(&[0.0, 1.0])], labels(2, 1)).with_partition(Partition::Test);
        assert!(matches!(fit_scaler(&d), Err(Error::Leakage(_))));
    }

    #[test]
    fn secom_sized_split_counts() {
        let d = ds_cols(&[vec![Some(0.0); 1567]], labels(1567, 104));
        let plan = stratified_split(&d, 0.3, 11).unwrap();
        assert_eq!(plan.test_row_indices.len(), 470);
        let pos = plan.test_row_indices.iter().filter(|&&r| r < 104).count();
        assert_eq!(pos, 31);
        assert_eq!(plan, stratified_split(&d, 0.3, 11).unwrap());
        assert_ne!(plan, stratified_split(&d, 0.3, 12).unwrap());
    }

    #[test]
    fn split_rejects_single_class() {
        let d = ds_cols(&[vec![Some(0.0); 10]], labels(10, 0));
        assert!(matches!(stratified_split(&d, 0.3, 0), Err(Error::Class(_))));
    }

    #[test]
    fn kfold_positive_counts() {
        let d = ds_cols(&[vec![Some(0.0); 1567]], labels(1567, 104));
        let plan = stratified_kfold(&d, 5, 3).unwrap();
        let folds = plan.fold_assignments.as_ref().unwrap();
        for f in 0..5 {
            let pos = (0..104).filter(|&r| folds[r] == f).count();
            assert!(pos == 20 || pos == 21, "fold {f} has {pos}");
            let size = folds.iter().filter(|&&x| x == f).count();
            assert!(size == 313 || size == 314);
        }
        let small = ds_cols(&[vec![Some(0.0); 10]], labels(10, 3));
        assert!(stratified_kfold(&small, 10, 0).is_err());
        assert!(stratified_kfold(&small, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_stratified_partition(n in 10usize..300, pos_frac in 0.05f64..0.5, tf in 0.1f64..0.9, seed in any::<u64>()) {
            let pos = ((n as f64 * pos_frac) as usize).max(2);
            prop_assume!(n - pos >= 2);
            let d = ds_cols(&[vec![Some(0.0); n]], labels(n, pos));
            let plan = stratified_split(&d, tf, seed).unwrap();
            let mut all: Vec<usize> = plan.train_row_indices.iter().chain(&plan.test_row_indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let test_pos = plan.test_row_indices.iter().filter(|&&r| r < pos).count() as f64;
            prop_assert!((test_pos - (pos as f64 * tf).round()).abs() <= 1.0);
        }

        #[test]
        fn kfold_is_stratified_partition(n in 20usize..300, pos in 5usize..20, k in 2usize..6, seed in any::<u64>()) {
            prop_assume!(pos < n && n - pos >= k);
            let d = ds_cols(&[vec![Some(0.0); n]], labels(n, pos));
            let plan = stratified_kfold(&d, k, seed).unwrap();
            let folds = plan.fold_assignments.clone().unwrap();
            for f in 0..k {
                let p = (0..pos).filter(|&r| folds[r] == f).count() as f64;
                prop_assert!((p - pos as f64 / k as f64).abs() < 1.0);
                let fp = plan.fold(f).unwrap();
                prop_assert_eq!(fp.train_row_indices.len() + fp.test_row_indices.len(), n);
            }
        }

        #[test]
        fn scaled_training_range_is_one(vals in proptest::collection::vec(-1e6f64..1e6, 3..40)) {
            let d = ds_cols(&[some(&vals)], labels(vals.len(), 1));
            let Ok(p) = fit_scaler(&d) else { return Ok(()) };
            let s = apply_scaler(&p, &d).unwrap();
            let col = s.features.column(0);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((hi - lo - 1.0).abs() < 1e-12);
            let sc = &p.columns[0];
            for (x, y) in vals.iter().zip(&col) {
                prop_assert_eq!(*y, 0.5 + (x - sc.ave_x) / (sc.max_x - sc.min_x));
            }
        }

        #[test]
        fn correlated_pruning_is_idempotent_and_complete(seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::rng::seeded(seed);
            let base: Vec<f64> = (0..30).map(|_| rng.random()).collect();
            let cols: Vec<Vec<Option<f64>>> = (0..8).map(|_| {
                let w: f64 = rng.random();
                base.iter().map(|b| if rng.random::<f64>() < 0.1 { None } else { Some(w * b + rng.random::<f64>() * 0.5) }).collect()
            }).collect();
            let d = ds_cols(&cols, labels(30, 10));
            let (once, _) = drop_correlated(&d, 0.7).unwrap();
            let (twice, log) = drop_correlated(&once, 0.7).unwrap();
            prop_assert!(log.is_empty());
            prop_assert_eq!(&once.features, &twice.features);
            let kept = once.features.columns();
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    if let Some(r) = pearson_pairwise(&kept[i], &kept[j]) {
                        prop_assert!(r.abs() <= 0.7);
                    }
                }
            }
        }
    }
}
