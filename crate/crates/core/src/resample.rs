//! Training-set rebalancing: SMOTE interpolation, random majority
//! under-sampling and the two chained together.
//!
//! Ratios are always post-sampling minority/majority ratios, and every count
//! target is floored so the requested ratio is never exceeded.

use std::fmt;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{floor_count, seeded, substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteParams {
    pub target_ratio: f64,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl SmoteParams {
    pub fn new(target_ratio: f64, seed: u64) -> Self {
        Self {
            target_ratio,
            k_neighbors: 5,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleStrategy {
    SmoteOnly,
    UnderOnly,
    Combined,
}

impl fmt::Display for ResampleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleStrategy::SmoteOnly => "smote_only",
            ResampleStrategy::UnderOnly => "under_only",
            ResampleStrategy::Combined => "combined",
        })
    }
}

/// A synthetic row `x_i + λ (x_j − x_i)`; indices refer to the input rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub parent: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSource {
    /// Row index in the input dataset.
    Original(usize),
    /// Index into [`ResamplePlan::synthetic`].
    Synthetic(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub strategy: ResampleStrategy,
    pub over_ratio: Option<f64>,
    pub under_ratio: Option<f64>,
    pub k_neighbors: Option<usize>,
    pub seed: u64,
    /// `(negatives, positives)` before and after.
    pub before: (usize, usize),
    pub after: (usize, usize),
    pub row_sources: Vec<RowSource>,
    pub synthetic: Vec<SyntheticRecord>,
}

impl ResamplePlan {
    pub fn synthetic_row_flags(&self) -> Vec<bool> {
        self.row_sources
            .iter()
            .map(|s| matches!(s, RowSource::Synthetic(_)))
            .collect()
    }

    /// minority / majority after resampling.
    pub fn final_ratio(&self) -> f64 {
        let (a, b) = self.after;
        a.min(b) as f64 / a.max(b) as f64
    }

    /// Header block of `key,value` lines followed by one line per synthetic
    /// row: `output_index,parent,neighbor,lambda`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("key,value\n");
        out.push_str(&format!("strategy,{}\n", self.strategy));
        out.push_str(&format!("over_ratio,{}\n", opt(self.over_ratio)));
        out.push_str(&format!("under_ratio,{}\n", opt(self.under_ratio)));
        out.push_str(&format!(
            "k_neighbors,{}\n",
            self.k_neighbors.map(|k| k.to_string()).unwrap_or_default()
        ));
        out.push_str(&format!("seed,{}\n", self.seed));
        out.push_str(&format!("before_negatives,{}\n", self.before.0));
        out.push_str(&format!("before_positives,{}\n", self.before.1));
        out.push_str(&format!("after_negatives,{}\n", self.after.0));
        out.push_str(&format!("after_positives,{}\n", self.after.1));
        out.push_str(&format!("final_ratio,{}\n", self.final_ratio()));
        out.push_str("\noutput_index,parent,neighbor,lambda\n");
        for (i, src) in self.row_sources.iter().enumerate() {
            if let RowSource::Synthetic(s) = src {
                let r = &self.synthetic[*s];
                out.push_str(&format!("{i},{},{},{}\n", r.parent, r.neighbor, r.lambda));
            }
        }
        out
    }
}

/// `x_i + λ (x_j − x_i)` with the same λ for every feature, kept inside the
/// parents' bounding box (rounding can otherwise step one ulp outside it).
pub fn interpolate(xi: &[f64], xj: &[f64], lambda: f64) -> Vec<f64> {
    xi.iter()
        .zip(xj)
        .map(|(&a, &b)| (a + lambda * (b - a)).clamp(a.min(b), a.max(b)))
        .collect()
}

/// `(minority class, majority class)`; ties make class 1 the minority.
fn classes(d: &Dataset) -> (u8, u8) {
    let (neg, pos) = d.class_counts();
    if pos <= neg {
        (1, 0)
    } else {
        (0, 1)
    }
}

fn count_of(d: &Dataset, class: u8) -> usize {
    d.labels.iter().filter(|&&l| l == class).count()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `rows`) of each row's `k` nearest other rows, ties by index.
fn nearest_neighbours(d: &Dataset, rows: &[usize], k: usize) -> Vec<Vec<usize>> {
    rows.par_iter()
        .map(|&r| {
            let x = d.features.row(r);
            let mut cand: Vec<(f64, usize)> = rows
                .iter()
                .enumerate()
                .filter(|(_, &o)| o != r)
                .map(|(pos, &o)| (squared_distance(x, d.features.row(o)), pos))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|(_, pos)| pos).collect()
        })
        .collect()
}

fn identity_plan(d: &Dataset, strategy: ResampleStrategy, seed: u64) -> ResamplePlan {
    let counts = d.class_counts();
    ResamplePlan {
        strategy,
        over_ratio: None,
        under_ratio: None,
        k_neighbors: None,
        seed,
        before: counts,
        after: counts,
        row_sources: (0..d.n_rows()).map(RowSource::Original).collect(),
        synthetic: Vec::new(),
    }
}

/// Appends SMOTE rows until minority = `floor(target_ratio × majority)`.
///
/// Synthetic row `t` draws from its own random stream `(seed, t)`: a
/// uniformly chosen minority row `x_i`, one of its `k` nearest minority
/// neighbours `x_j`, and `λ ~ U[0, 1)`. Output is the input rows followed by
/// the synthetic rows in draw order.
pub fn smote(train: &Dataset, p: &SmoteParams) -> Result<(Dataset, ResamplePlan)> {
    train.require_fit_partition("smote")?;
    train.require_complete()?;
    train.require_both_classes()?;
    if !(p.target_ratio > 0.0 && p.target_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "target ratio {} outside (0, 1]",
            p.target_ratio
        )));
    }
    if p.k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be at least 1"));
    }
    let (minority, majority) = classes(train);
    let min_rows = train.class_indices(minority);
    let n_major = count_of(train, majority);
    if min_rows.len() <= p.k_neighbors {
        return Err(Error::Class(format!(
            "minority class has {} rows, need more than k_neighbors = {}",
            min_rows.len(),
            p.k_neighbors
        )));
    }
    let target = floor_count(p.target_ratio * n_major as f64);
    let mut plan = identity_plan(train, ResampleStrategy::SmoteOnly, p.seed);
    plan.over_ratio = Some(p.target_ratio);
    plan.k_neighbors = Some(p.k_neighbors);
    if target <= min_rows.len() {
        log::warn!(
            "smote: minority already at {} >= target {target}, returning input unchanged",
            min_rows.len()
        );
        return Ok((train.clone(), plan));
    }

    let neighbours = nearest_neighbours(train, &min_rows, p.k_neighbors);
    let n_new = target - min_rows.len();
    let records: Vec<SyntheticRecord> = (0..n_new)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(p.seed, t as u64);
            let i = rng.random_range(0..min_rows.len());
            let j = neighbours[i][rng.random_range(0..neighbours[i].len())];
            let lambda: f64 = rng.random();
            SyntheticRecord {
                parent: min_rows[i],
                neighbor: min_rows[j],
                lambda,
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = records
        .par_iter()
        .map(|s| {
            interpolate(
                train.features.row(s.parent),
                train.features.row(s.neighbor),
                s.lambda,
            )
        })
        .collect();

    let mut out = train.clone();
    for row in &rows {
        out.features.push_row(row);
        out.labels.push(minority);
    }
    plan.row_sources
        .extend((0..records.len()).map(RowSource::Synthetic));
    plan.synthetic = records;
    plan.after = out.class_counts();
    out.record(
        "smote",
        format!(
            "target_ratio={} k={} seed={} synthetic={n_new}",
            p.target_ratio, p.k_neighbors, p.seed
        ),
        Vec::new(),
    );
    Ok((out, plan))
}

/// Reduces the majority class to `floor(minority / target_ratio)` rows by
/// seeded sampling without replacement; kept rows stay in input order.
pub fn random_undersample(train: &Dataset, target_ratio: f64, seed: u64) -> Result<(Dataset, ResamplePlan)> {
    train.require_fit_partition("random_undersample")?;
    train.require_both_classes()?;
    if !(target_ratio > 0.0 && target_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "target ratio {target_ratio} outside (0, 1]"
        )));
    }
    let (minority, majority) = classes(train);
    let n_minor = count_of(train, minority);
    let major_rows = train.class_indices(majority);
    let target = floor_count(n_minor as f64 / target_ratio);
    if target == 0 {
        return Err(Error::invalid("under-sampling target leaves no majority rows"));
    }
    let mut plan = identity_plan(train, ResampleStrategy::UnderOnly, seed);
    plan.under_ratio = Some(target_ratio);
    if target >= major_rows.len() {
        log::warn!(
            "random_undersample: majority has {} rows, target {target}; nothing to remove",
            major_rows.len()
        );
        return Ok((train.clone(), plan));
    }
    let mut keep_major: Vec<usize> = sample(&mut seeded(seed), major_rows.len(), target)
        .into_iter()
        .map(|i| major_rows[i])
        .collect();
    keep_major.sort_unstable();
    let mut keep: Vec<usize> = (0..train.n_rows())
        .filter(|&r| train.labels[r] == minority)
        .chain(keep_major)
        .collect();
    keep.sort_unstable();
    let mut out = train.select_rows(&keep);
    plan.row_sources = keep.iter().map(|&r| RowSource::Original(r)).collect();
    plan.after = out.class_counts();
    out.record(
        "random_undersample",
        format!("target_ratio={target_ratio} seed={seed} kept_majority={target}"),
        Vec::new(),
    );
    Ok((out, plan))
}

/// SMOTE to `over_ratio`, then under-sampling to `under_ratio` when given.
pub fn combined_resample(
    train: &Dataset,
    over_ratio: f64,
    under_ratio: Option<f64>,
    k_neighbors: usize,
    seed: u64,
) -> Result<(Dataset, ResamplePlan)> {
    let smote_params = SmoteParams {
        target_ratio: over_ratio,
        k_neighbors,
        seed,
    };
    let (over, over_plan) = smote(train, &smote_params)?;
    let Some(under_ratio) = under_ratio else {
        return Ok((over, over_plan));
    };
    let under_seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let (out, under_plan) = random_undersample(&over, under_ratio, under_seed)?;
    let row_sources = under_plan
        .row_sources
        .iter()
        .map(|src| match src {
            RowSource::Original(r) => over_plan.row_sources[*r],
            synthetic => *synthetic,
        })
        .collect();
    let plan = ResamplePlan {
        strategy: ResampleStrategy::Combined,
        over_ratio: Some(over_ratio),
        under_ratio: Some(under_ratio),
        k_neighbors: Some(k_neighbors),
        seed,
        before: over_plan.before,
        after: under_plan.after,
        row_sources,
        synthetic: over_plan.synthetic,
    };
    Ok((out, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureMatrix, Partition};
    use proptest::prelude::*;

    fn random_ds(n_neg: usize, n_pos: usize, n_cols: usize, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n_neg + n_pos)
            .map(|_| (0..n_cols).map(|_| rng.random::<f64>()).collect())
            .collect();
        let labels = (0..n_neg + n_pos).map(|i| u8::from(i >= n_neg)).collect();
        Dataset::new(FeatureMatrix::from_rows(&rows).unwrap(), labels)
            .unwrap()
            .with_partition(Partition::Train)
    }

    #[test]
    fn lambda_zero_is_parent() {
        let xi = [0.1, -3.0, 7.25];
        let xj = [0.9, 2.0, -1.0];
        assert_eq!(interpolate(&xi, &xj, 0.0), xi.to_vec());
    }

    #[test]
    fn smote_reaches_floor_of_ratio() {
        let d = random_ds(1024, 73, 3, 1);
        let (out, plan) = smote(&d, &SmoteParams::new(0.7, 5)).unwrap();
        assert_eq!(out.class_counts(), (1024, 716));
        assert_eq!(plan.synthetic.len(), 716 - 73);
        assert_eq!(plan.synthetic_row_flags().iter().filter(|&&f| f).count(), 643);
        assert!(plan.synthetic_row_flags()[..1097].iter().all(|&f| !f));
        assert_eq!(out.features.select_rows(&(0..1097).collect::<Vec<_>>()), d.features);
    }

    #[test]
    fn smote_errors_and_noops() {
        let d = random_ds(30, 5, 2, 2);
        assert!(matches!(smote(&d, &SmoteParams::new(0.5, 0)), Err(Error::Class(_))));
        let d = random_ds(20, 10, 2, 2);
        let (out, plan) = smote(&d, &SmoteParams::new(0.5, 0)).unwrap();
        assert_eq!(out.features, d.features);
        assert!(plan.synthetic.is_empty());
        let test = d.clone().with_partition(Partition::Test);
        assert!(matches!(smote(&test, &SmoteParams::new(0.9, 0)), Err(Error::Leakage(_))));
    }

    #[test]
    fn undersample_examples() {
        let d = random_ds(100, 10, 2, 3);
        let (out, _) = random_undersample(&d, 1.0, 0).unwrap();
        assert_eq!(out.class_counts(), (10, 10));
        let (out, _) = random_undersample(&d, 0.1, 0).unwrap();
        assert_eq!(out.features, d.features);
        let d = random_ds(100, 40, 2, 3);
        let (out, plan) = random_undersample(&d, 0.8, 0).unwrap();
        assert_eq!(out.class_counts(), (50, 40));
        assert_eq!(plan.after, (50, 40));
        let minority_before: Vec<_> = d.class_indices(1).iter().map(|&r| d.features.row(r).to_vec()).collect();
        let minority_after: Vec<_> = out.class_indices(1).iter().map(|&r| out.features.row(r).to_vec()).collect();
        assert_eq!(minority_before, minority_after);
    }

    #[test]
    fn combined_examples() {
        let d = random_ds(700, 50, 2, 4);
        let (out, plan) = combined_resample(&d, 0.4, Some(0.8), 5, 9).unwrap();
        assert_eq!(out.class_counts(), (350, 280));
        assert_eq!(plan.strategy, ResampleStrategy::Combined);
        assert!((plan.final_ratio() - 0.8).abs() < 1e-12);

        let (out, _) = combined_resample(&d, 1.0, Some(1.0), 5, 9).unwrap();
        let (n, p) = out.class_counts();
        assert_eq!(n, p);

        let (a, pa) = combined_resample(&d, 0.7, None, 5, 9).unwrap();
        let (b, pb) = smote(&d, &SmoteParams { target_ratio: 0.7, k_neighbors: 5, seed: 9 }).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn combined_row_sources_point_at_parents() {
        let d = random_ds(300, 25, 3, 5);
        let (out, plan) = combined_resample(&d, 0.4, Some(0.8), 5, 1).unwrap();
        assert_eq!(plan.row_sources.len(), out.n_rows());
        for (r, src) in plan.row_sources.iter().enumerate() {
            match *src {
                RowSource::Original(o) => assert_eq!(out.features.row(r), d.features.row(o)),
                RowSource::Synthetic(s) => {
                    let rec = plan.synthetic[s];
                    let expect = interpolate(d.features.row(rec.parent), d.features.row(rec.neighbor), rec.lambda);
                    assert_eq!(out.features.row(r), expect.as_slice());
                }
            }
        }
        assert!(plan.to_csv().contains("strategy,combined\n"));
    }

    #[test]
    fn thread_count_independent() {
        let d = random_ds(400, 30, 4, 6);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| smote(&d, &SmoteParams::new(0.9, 77)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    proptest! {
        #[test]
        fn synthetic_rows_follow_interpolation(seed in any::<u64>(), n_pos in 7usize..20) {
            let d = random_ds(60, n_pos, 3, seed);
            let (out, plan) = smote(&d, &SmoteParams::new(1.0, seed)).unwrap();
            prop_assert_eq!(out.class_counts(), (60, 60));
            for (r, src) in plan.row_sources.iter().enumerate() {
                if let RowSource::Synthetic(s) = *src {
                    let rec = plan.synthetic[s];
                    prop_assert_eq!(d.labels[rec.parent], 1);
                    prop_assert_eq!(d.labels[rec.neighbor], 1);
                    prop_assert!(rec.parent != rec.neighbor);
                    let (xi, xj) = (d.features.row(rec.parent), d.features.row(rec.neighbor));
                    for (c, &v) in out.features.row(r).iter().enumerate() {
                        prop_assert!((v - (xi[c] + rec.lambda * (xj[c] - xi[c]))).abs() <= 1e-12);
                        prop_assert!(v >= xi[c].min(xj[c]) && v <= xi[c].max(xj[c]));
                    }
                }
            }
        }
    }
}
