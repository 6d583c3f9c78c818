//! Confusion counts, threshold metrics and ROC/AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Ratios with a zero denominator are reported as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub far: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub far_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Rows with score ≥ threshold are predicted positive; the first point
    /// uses `+∞`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn check_lengths(labels: &[u8], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("no labels to evaluate".into()));
    }
    Ok(())
}

/// Predicts positive iff `score >= threshold`.
pub fn confusion(labels: &[u8], scores: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    check_lengths(labels, scores)?;
    let mut c = ConfusionMatrix::default();
    for (&y, &s) in labels.iter().zip(scores) {
        match (y == 1, s >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metric_set(c: &ConfusionMatrix) -> MetricSet {
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let (far, far_undefined) = ratio(c.fp, c.fp + c.tn);
    MetricSet {
        balanced_accuracy: (recall + (1.0 - far)) / 2.0,
        precision,
        recall,
        far,
        precision_undefined,
        recall_undefined,
        far_undefined,
    }
}

/// One point per distinct score (descending) plus the `+∞` origin. Tied
/// scores move in a single step, so the trapezoid credits each tied
/// positive/negative pair with one half.
pub fn roc_curve(labels: &[u8], scores: &[f64]) -> Result<RocCurve> {
    check_lengths(labels, scores)?;
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {s} is not a number")));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Class(format!(
            "ROC needs both classes, found {n_neg} negatives and {n_pos} positives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc2 = 0.0; // twice the area, in units of pairs
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc2 += ((fp - fp0) * (tp + tp0)) as f64;
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: s,
        });
    }
    let auc = auc2 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocCurve { points, auc })
}

/// `fpr,tpr,threshold` lines under that header.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
    }
    out
}

/// Standalone SVG plot of the curve with the chance diagonal.
pub fn roc_svg(curve: &RocCurve, title: &str) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    let x = |f: f64| PAD + f * SIZE;
    let y = |t: f64| PAD + (1.0 - t) * SIZE;
    let path: Vec<String> = curve
        .points
        .iter()
        .map(|p| format!("{:.3},{:.3}", x(p.fpr), y(p.tpr)))
        .collect();
    let total = SIZE + 2.0 * PAD;
    let mut ticks = String::new();
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        ticks.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{v:.1}</text>\n",
            x(v),
            y(0.0) + 16.0
        ));
        ticks.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{v:.1}</text>\n",
            x(0.0) - 6.0,
            y(v) + 4.0
        ));
    }
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{total}\" viewBox=\"0 0 {total} {total}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<text x=\"{mid}\" y=\"28\" font-size=\"15\" text-anchor=\"middle\">{title} (AUC = {auc:.3})</text>\n",
            "<rect x=\"{pad}\" y=\"{pad}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"black\"/>\n",
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{path}\"/>\n",
            "{ticks}",
            "<text x=\"{mid}\" y=\"{xlabel}\" font-size=\"13\" text-anchor=\"middle\">False positive rate</text>\n",
            "<text x=\"14\" y=\"{mid}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 {mid})\">True positive rate</text>\n",
            "</svg>\n"
        ),
        total = total,
        mid = total / 2.0,
        title = escape_xml(title),
        auc = curve.auc,
        pad = PAD,
        size = SIZE,
        x0 = x(0.0),
        y0 = y(0.0),
        x1 = x(1.0),
        y1 = y(1.0),
        path = path.join(" "),
        ticks = ticks,
        xlabel = total - 12.0,
    )
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mann_whitney(labels: &[u8], scores: &[f64]) -> f64 {
        let (mut wins, mut p, mut n) = (0.0, 0usize, 0usize);
        for (i, &yi) in labels.iter().enumerate() {
            if yi == 1 {
                p += 1;
            } else {
                n += 1;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / (p * n) as f64
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[1, 1, 0, 0], &[0.9, 0.4, 0.6, 0.1], 0.5).unwrap();
        assert_eq!(c, ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let c = confusion(&[1, 0, 1], &[0.9, 0.1, 0.5], 0.5).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = confusion(&[1, 0, 1], &[0.1, 0.1, 0.2], 0.5).unwrap();
        assert_eq!((c.tp, c.fp), (0, 0));
        assert!(matches!(confusion(&[1], &[0.1, 0.2], 0.5), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn metric_examples() {
        let m = metric_set(&ConfusionMatrix { tp: 8, fp: 1, fn_: 2, tn: 89 });
        assert!((m.precision - 8.0 / 9.0).abs() < 1e-15);
        assert!((m.recall - 0.8).abs() < 1e-15);
        assert!((m.far - 1.0 / 90.0).abs() < 1e-15);
        assert!((m.balanced_accuracy - (0.8 + 89.0 / 90.0) / 2.0).abs() < 1e-15);

        let m = metric_set(&ConfusionMatrix { tp: 5, fp: 0, fn_: 0, tn: 5 });
        assert_eq!((m.precision, m.recall, m.balanced_accuracy, m.far), (1.0, 1.0, 1.0, 0.0));

        let m = metric_set(&ConfusionMatrix { tp: 0, fp: 0, fn_: 4, tn: 6 });
        assert_eq!(m.recall, 0.0);
        assert!(m.precision_undefined && m.precision == 0.0);
        assert!(!m.recall_undefined);
    }

    #[test]
    fn roc_examples() {
        let r = roc_curve(&[1, 1, 0, 0], &[0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc_curve(&[1, 1, 0, 0], &[0.1, 0.2, 0.8, 0.9]).unwrap();
        assert_eq!(r.auc, 0.0);
        let r = roc_curve(&[1, 0], &[0.5, 0.5]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 2);
        assert!(matches!(roc_curve(&[1, 1], &[0.1, 0.2]), Err(Error::Class(_))));
        assert!(roc_csv(&r).starts_with("fpr,tpr,threshold\n0,0,inf\n"));
        assert!(roc_svg(&r, "a<b").contains("a&lt;b"));
    }

    fn labelled() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
        (2usize..50).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec((0u8..8).prop_map(|k| k as f64 / 8.0), n),
            )
        })
        .prop_filter("both classes", |(y, _)| y.contains(&0) && y.contains(&1))
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_statistic((labels, scores) in labelled()) {
            let r = roc_curve(&labels, &scores).unwrap();
            prop_assert!((r.auc - mann_whitney(&labels, &scores)).abs() < 1e-9);
        }

        #[test]
        fn curve_is_monotone_and_anchored((labels, scores) in labelled()) {
            let r = roc_curve(&labels, &scores).unwrap();
            let first = r.points[0];
            let last = r.points[r.points.len() - 1];
            prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in r.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }

        #[test]
        fn auc_invariant_under_increasing_map((labels, scores) in labelled()) {
            let a = roc_curve(&labels, &scores).unwrap().auc;
            let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(a, roc_curve(&labels, &mapped).unwrap().auc);
        }

        #[test]
        fn defined_metrics_in_unit_interval(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
            let m = metric_set(&ConfusionMatrix { tp, fp, fn_, tn });
            for v in [m.balanced_accuracy, m.precision, m.recall, m.far] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
