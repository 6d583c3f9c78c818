//! Report text and file emission. Output depends only on the report
//! contents; wall-clock timings are never written.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{roc_csv, roc_svg, MetricSet};
use crate::preprocess::drop_logs_csv;

use super::{EvalReport, FoldOutcome, ModelResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReportFormat {
    /// `report.txt`
    TableText,
    /// `roc_<model>.csv`
    RocCsv,
    /// `roc_<model>.svg`
    RocPlot,
    /// `votes.csv`, `drops.csv`, `resample_plan.csv`
    Ledger,
}

impl ReportFormat {
    pub fn all() -> BTreeSet<ReportFormat> {
        [
            ReportFormat::TableText,
            ReportFormat::RocCsv,
            ReportFormat::RocPlot,
            ReportFormat::Ledger,
        ]
        .into_iter()
        .collect()
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn metric(v: f64, undefined: bool) -> String {
    if undefined {
        "n/a".to_string()
    } else {
        format!("{v:.4}")
    }
}

const HEADER: [&str; 6] = ["Model", "Balanced Accuracy", "Precision", "Recall", "FAR", "AUC"];

fn table(out: &mut String, rows: &[[String; 6]]) {
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    out.push_str(&line(&HEADER));
    out.push('\n');
    for r in rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        out.push_str(&line(&cells));
        out.push('\n');
    }
}

fn model_row(m: &ModelResult) -> [String; 6] {
    let s: &MetricSet = &m.metrics;
    [
        m.name.clone(),
        format!("{:.4}", s.balanced_accuracy),
        metric(s.precision, s.precision_undefined),
        metric(s.recall, s.recall_undefined),
        metric(s.far, s.far_undefined),
        format!("{:.4}", m.roc.auc),
    ]
}

fn fold_block(out: &mut String, f: &FoldOutcome) {
    let label = f.fold.map_or_else(|| "holdout".to_string(), |k| format!("fold {k}"));
    let w = |out: &mut String, s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    w(out, format!("{label}: train {} rows, test {} rows", f.n_train, f.n_test));
    w(out, format!("  test sha256 after split    {}", f.split_digest));
    w(out, format!("  test sha256 at evaluation  {}", f.test_digest));
    w(out, format!("  train-degenerate columns   {}", f.train_degenerate.len()));
    let im = &f.impute;
    w(
        out,
        format!(
            "  imputation {}: {} train cells, {} test cells, {} fallbacks, {} overrides, {} toggled",
            im.method,
            im.train_filled,
            im.test_filled,
            im.fallbacks,
            im.overrides_applied.len(),
            im.toggled.len()
        ),
    );
    let l = &f.ledger;
    w(
        out,
        format!(
            "  votes: {} selectors, threshold {}, voted {}, zero votes {}, selected {}",
            l.n_selectors,
            l.threshold,
            l.voted(),
            l.zero_votes(),
            l.selected.len()
        ),
    );
    match &f.resample {
        None => w(out, "  resampling: none".into()),
        Some(p) => w(
            out,
            format!(
                "  resampling {}: over {} under {}, {}:{} -> {}:{} (negatives:positives), ratio {:.4}",
                p.strategy,
                p.over_ratio.map_or_else(|| "-".into(), |v| v.to_string()),
                p.under_ratio.map_or_else(|| "-".into(), |v| v.to_string()),
                p.before.0,
                p.before.1,
                p.after.0,
                p.after.1,
                p.final_ratio()
            ),
        ),
    }
    w(
        out,
        format!("  trained on {} negatives, {} positives", f.trained_on.0, f.trained_on.1),
    );
    out.push('\n');
    let rows: Vec<[String; 6]> = f.models.iter().map(model_row).collect();
    table(out, &rows);
    out.push('\n');
}

/// Plain-text report: run metadata, stage counts and one metrics table per
/// fold (plus the fold means in k-fold mode).
pub fn report_text(r: &EvalReport) -> String {
    let mut out = String::new();
    let e = &r.eda;
    let p = &r.prune;
    let _ = writeln!(out, "scenario       {}", r.scenario);
    let _ = writeln!(out, "seed           {}", r.seed);
    let _ = writeln!(out, "mode           {:?}", r.mode);
    let _ = writeln!(out, "config sha256  {}", r.config_digest);
    let _ = writeln!(out, "input sha256   {}", r.input_digest);
    out.push('\n');
    let _ = writeln!(
        out,
        "data: {} rows, {} columns, {} negatives, {} positives",
        e.n_rows, e.n_cols, e.negatives, e.positives
    );
    let _ = writeln!(
        out,
        "  missing cells {}: {} of all cells, {} within the {} affected columns",
        e.missing.missing_cells,
        pct(e.missing.overall_fraction),
        pct(e.missing.affected_fraction),
        e.missing.affected_columns
    );
    let _ = writeln!(out, "pruning:");
    for log in &r.drop_logs {
        let _ = writeln!(out, "  {:<13} {:>4}  (parameter {})", log.reason.to_string(), log.len(), log.parameter);
    }
    let _ = writeln!(
        out,
        "  remaining     {:>4}  (residual missing {} of cells)",
        p.columns_after,
        pct(p.residual_missing.overall_fraction)
    );
    out.push('\n');
    for f in &r.folds {
        fold_block(&mut out, f);
    }
    if let Some(mean) = &r.mean {
        let _ = writeln!(out, "mean over {} folds", r.folds.len());
        let rows: Vec<[String; 6]> = mean
            .iter()
            .map(|m| {
                [
                    m.name.clone(),
                    format!("{:.4}", m.balanced_accuracy),
                    format!("{:.4}", m.precision),
                    format!("{:.4}", m.recall),
                    format!("{:.4}", m.far),
                    format!("{:.4}", m.auc),
                ]
            })
            .collect();
        table(&mut out, &rows);
        out.push('\n');
    }
    if let Some(rf) = &r.reference {
        let _ = writeln!(
            out,
            "stretch reference for {} (for comparison only, not a gate): balanced accuracy {}, precision {}, recall {}, FAR {}, AUC {}",
            rf.model, rf.balanced_accuracy, rf.precision, rf.recall, rf.far, rf.auc
        );
    }
    out
}

fn suffix(f: &FoldOutcome) -> String {
    f.fold.map_or_else(String::new, |k| format!("_fold{k}"))
}

fn write(dir: &Path, name: String, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Writes the requested formats into `out_dir` (created if needed) and
/// returns the paths in a fixed order. An empty set writes nothing.
pub fn emit_report(r: &EvalReport, out_dir: &Path, formats: &BTreeSet<ReportFormat>) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if formats.is_empty() {
        return Ok(files);
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for format in formats {
        match format {
            ReportFormat::TableText => write(out_dir, "report.txt".into(), &report_text(r), &mut files)?,
            ReportFormat::RocCsv => {
                for f in &r.folds {
                    for m in &f.models {
                        write(out_dir, format!("roc_{}{}.csv", m.name, suffix(f)), &roc_csv(&m.roc), &mut files)?;
                    }
                }
            }
            ReportFormat::RocPlot => {
                for f in &r.folds {
                    for m in &f.models {
                        let title = format!("{} {} AUC {:.3}", r.scenario, m.name, m.roc.auc);
                        write(out_dir, format!("roc_{}{}.svg", m.name, suffix(f)), &roc_svg(&m.roc, &title), &mut files)?;
                    }
                }
            }
            ReportFormat::Ledger => {
                write(out_dir, "drops.csv".into(), &drop_logs_csv(&r.drop_logs), &mut files)?;
                for f in &r.folds {
                    write(out_dir, format!("votes{}.csv", suffix(f)), &f.ledger.to_csv(), &mut files)?;
                    let plan = f
                        .resample
                        .as_ref()
                        .map_or_else(|| "key,value\nstrategy,none\n".to_string(), |p| p.to_csv());
                    write(out_dir, format!("resample_plan{}.csv", suffix(f)), &plan, &mut files)?;
                }
            }
        }
    }
    Ok(files)
}
