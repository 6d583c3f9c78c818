//! Univariate filters: ANOVA F statistic and binned mutual information.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::{check_n_keep, top_k, SelectorDecision};

/// One-way ANOVA F between the two classes over the present values.
/// Zero within-class variance gives `+∞` when the class means differ and
/// `0` when they do not.
pub fn f_statistic(values: &[f64], labels: &[u8]) -> f64 {
    let mut n = [0.0f64; 2];
    let mut sum = [0.0f64; 2];
    for (&v, &y) in values.iter().zip(labels) {
        if !v.is_nan() {
            n[y as usize] += 1.0;
            sum[y as usize] += v;
        }
    }
    if n[0] == 0.0 || n[1] == 0.0 {
        return 0.0;
    }
    let mean = [sum[0] / n[0], sum[1] / n[1]];
    let total = n[0] + n[1];
    let grand = (sum[0] + sum[1]) / total;
    let between = n[0] * (mean[0] - grand).powi(2) + n[1] * (mean[1] - grand).powi(2);
    let within: f64 = values
        .iter()
        .zip(labels)
        .filter(|(v, _)| !v.is_nan())
        .map(|(&v, &y)| (v - mean[y as usize]).powi(2))
        .sum();
    let df_within = total - 2.0;
    if within <= 0.0 || df_within <= 0.0 {
        return if between > 0.0 { f64::INFINITY } else { 0.0 };
    }
    between / (within / df_within)
}

/// Top `n_keep` columns by F statistic.
pub fn select_f_score(train: &Dataset, n_keep: usize) -> Result<SelectorDecision> {
    train.require_fit_partition("select_f_score")?;
    train.require_both_classes()?;
    check_n_keep(n_keep, train.n_cols())?;
    let scores: Vec<f64> = (0..train.n_cols())
        .into_par_iter()
        .map(|c| f_statistic(&train.features.column(c), &train.labels))
        .collect();
    Ok(SelectorDecision::new(
        "f_score",
        top_k(train.column_ids(), &scores, n_keep),
        train.column_ids(),
        Some(scores),
    ))
}

/// Equal-frequency bin of every value: `⌊B · #{v < x} / n⌋`. Tied values share
/// a bin, so a constant column lands in a single bin.
pub fn equal_frequency_bins(values: &[f64], n_bins: usize) -> Vec<usize> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    values
        .iter()
        .map(|&x| {
            let below = sorted.partition_point(|&v| v < x);
            (n_bins * below / n).min(n_bins - 1)
        })
        .collect()
}

/// Plug-in mutual information (nats) between two discrete codes.
pub fn discrete_mutual_info(a: &[usize], b: &[usize]) -> f64 {
    let na = a.iter().max().map_or(0, |m| m + 1);
    let nb = b.iter().max().map_or(0, |m| m + 1);
    let n = a.len() as f64;
    let mut joint = vec![0.0; na * nb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * nb + j] += 1.0;
    }
    let pa: Vec<f64> = (0..na).map(|i| joint[i * nb..(i + 1) * nb].iter().sum::<f64>() / n).collect();
    let pb: Vec<f64> = (0..nb).map(|j| (0..na).map(|i| joint[i * nb + j]).sum::<f64>() / n).collect();
    let mut mi = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let p = joint[i * nb + j] / n;
            if p > 0.0 {
                mi += p * (p / (pa[i] * pb[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Top `n_keep` columns by mutual information with the label after
/// equal-frequency binning into `n_bins` bins.
pub fn select_mutual_info(train: &Dataset, n_keep: usize, n_bins: usize) -> Result<SelectorDecision> {
    train.require_fit_partition("select_mutual_info")?;
    train.require_both_classes()?;
    train.require_complete()?;
    check_n_keep(n_keep, train.n_cols())?;
    if n_bins < 2 {
        return Err(Error::invalid("n_bins must be at least 2"));
    }
    let labels: Vec<usize> = train.labels.iter().map(|&y| y as usize).collect();
    let scores: Vec<f64> = (0..train.n_cols())
        .into_par_iter()
        .map(|c| discrete_mutual_info(&equal_frequency_bins(&train.features.column(c), n_bins), &labels))
        .collect();
    Ok(SelectorDecision::new(
        format!("mutual_info_{n_bins}"),
        top_k(train.column_ids(), &scores, n_keep),
        train.column_ids(),
        Some(scores),
    ))
}
