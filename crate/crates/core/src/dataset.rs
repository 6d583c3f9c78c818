//! Tabular data with a missing-value mask, binary labels and a provenance log.
//!
//! Missing cells are stored as `NaN` internally; every accessor that exposes
//! individual cells returns `Option<f64>`. Loaders never produce `NaN` for a
//! present value, so the two are never confused.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The SECOM missing-value token.
pub const SECOM_MISSING_TOKEN: &str = "NaN";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    column_ids: Vec<usize>,
    /// Row-major, `NaN` = missing.
    cells: Vec<f64>,
}

/// Bitwise cell equality, so missing cells compare equal.
impl PartialEq for FeatureMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows
            && self.column_ids == other.column_ids
            && self.cells.len() == other.cells.len()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

impl FeatureMatrix {
    /// Builds a matrix from row-major cells where `None` marks a missing cell.
    pub fn from_options(
        n_rows: usize,
        column_ids: Vec<usize>,
        cells: Vec<Option<f64>>,
    ) -> Result<Self> {
        let raw = cells
            .into_iter()
            .map(|c| match c {
                Some(v) if v.is_nan() => Err(Error::invalid("present cell holds NaN")),
                Some(v) => Ok(v),
                None => Ok(f64::NAN),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_raw(n_rows, column_ids, raw)
    }

    /// Builds a matrix from row-major cells where `NaN` marks a missing cell.
    pub fn from_raw(n_rows: usize, column_ids: Vec<usize>, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != n_rows * column_ids.len() {
            return Err(Error::LengthMismatch {
                left: cells.len(),
                right: n_rows * column_ids.len(),
            });
        }
        let mut sorted = column_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate column id"));
        }
        Ok(Self {
            n_rows,
            column_ids,
            cells,
        })
    }

    /// Complete matrix from row vectors, column ids `0..n_cols`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut cells = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::RaggedRow {
                    line: i + 1,
                    expected: n_cols,
                    found: r.len(),
                });
            }
            cells.extend_from_slice(r);
        }
        Self::from_raw(rows.len(), (0..n_cols).collect(), cells)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.column_ids.len()
    }

    pub fn column_ids(&self) -> &[usize] {
        &self.column_ids
    }

    pub fn column_index(&self, column_id: usize) -> Option<usize> {
        self.column_ids.iter().position(|&c| c == column_id)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.raw(row, col);
        (!v.is_nan()).then_some(v)
    }

    /// Raw cell, `NaN` when missing.
    #[inline]
    pub fn raw(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.n_cols() + col]
    }

    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.raw(row, col).is_nan()
    }

    /// Sets a cell; `None` marks it missing.
    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let n_cols = self.n_cols();
        self.cells[row * n_cols + col] = value.unwrap_or(f64::NAN);
    }

    /// Raw row slice, `NaN` when missing.
    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.n_cols();
        &self.cells[row * n..(row + 1) * n]
    }

    pub(crate) fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let n = self.n_cols();
        &mut self.cells[row * n..(row + 1) * n]
    }

    /// Raw column copy, `NaN` when missing.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.raw(r, col)).collect()
    }

    /// Column-major copy of all cells.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_cols()).map(|c| self.column(c)).collect()
    }

    pub fn raw_cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|v| v.is_nan()).count()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut cells = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            cells.extend(cols.iter().map(|&c| row[c]));
        }
        Self {
            n_rows: self.n_rows,
            column_ids: cols.iter().map(|&c| self.column_ids[c]).collect(),
            cells,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut cells = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            cells.extend_from_slice(self.row(r));
        }
        Self {
            n_rows: rows.len(),
            column_ids: self.column_ids.clone(),
            cells,
        }
    }

    /// Appends a complete row.
    pub(crate) fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.n_cols());
        self.cells.extend_from_slice(row);
        self.n_rows += 1;
    }
}

/// Which partition a dataset came from. Fitting routines refuse [`Partition::Test`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partition {
    Full,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub operation: String,
    pub parameters: String,
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: FeatureMatrix,
    /// 0 = pass / majority, 1 = fail / minority.
    pub labels: Vec<u8>,
    pub provenance: Vec<ProvenanceRecord>,
    pub partition: Partition,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != features.n_rows() {
            return Err(Error::RowCountMismatch {
                data: features.n_rows(),
                labels: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Label(format!("label {bad} is not binary")));
        }
        Ok(Self {
            features,
            labels,
            provenance: Vec::new(),
            partition: Partition::Full,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.features.n_cols()
    }

    pub fn column_ids(&self) -> &[usize] {
        self.features.column_ids()
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn class_indices(&self, class: u8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn record(&mut self, operation: &str, parameters: impl Into<String>, columns: Vec<usize>) {
        self.provenance.push(ProvenanceRecord {
            operation: operation.to_string(),
            parameters: parameters.into(),
            columns,
        });
    }

    /// Row subset; labels, provenance and partition carried over.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            provenance: self.provenance.clone(),
            partition: self.partition,
        }
    }

    /// Column subset by position.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            features: self.features.select_columns(cols),
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
            partition: self.partition,
        }
    }

    /// Column subset by stable id, in the order the ids are given.
    pub fn select_column_ids(&self, ids: &[usize]) -> Result<Self> {
        let cols = ids
            .iter()
            .map(|&id| self.features.column_index(id).ok_or(Error::UnknownColumn(id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&cols))
    }

    pub fn with_partition(mut self, partition: Partition) -> Self {
        self.partition = partition;
        self
    }

    /// Leakage guard for every routine that fits parameters.
    pub fn require_fit_partition(&self, routine: &'static str) -> Result<()> {
        if self.partition == Partition::Test {
            return Err(Error::Leakage(routine));
        }
        Ok(())
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let (neg, pos) = self.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::Class(format!(
                "both classes required, found {neg} negatives and {pos} positives"
            )));
        }
        Ok(())
    }

    pub fn require_complete(&self) -> Result<()> {
        match self.features.missing_count() {
            0 => Ok(()),
            n => Err(Error::MissingValues(n)),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_cell(token: &str, line: usize, field: usize) -> Result<f64> {
    if token == SECOM_MISSING_TOKEN || token.is_empty() {
        return Ok(f64::NAN);
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            field,
            token: token.to_string(),
        }),
    }
}

/// Loads the SECOM data/labels pair.
///
/// The data file holds whitespace-separated reals with `NaN` for missing
/// cells. Each labels line starts with `-1` (pass, class 0) or `1` (fail,
/// class 1); any trailing tokens form a timestamp that is only kept in the
/// provenance log.
pub fn load_secom(data_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let data_path = data_path.as_ref();
    let labels_path = labels_path.as_ref();
    let data = read_text(data_path)?;
    let labels_text = read_text(labels_path)?;

    let mut cells = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (i, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = cells.len();
        for (j, tok) in line.split_whitespace().enumerate() {
            cells.push(parse_cell(tok, i + 1, j + 1)?);
        }
        let found = cells.len() - before;
        match n_cols {
            None => n_cols = Some(found),
            Some(expected) if expected != found => {
                return Err(Error::RaggedRow {
                    line: i + 1,
                    expected,
                    found,
                })
            }
            _ => {}
        }
        n_rows += 1;
    }
    let n_cols = match n_cols {
        Some(n) if n > 0 => n,
        _ => return Err(Error::EmptyInput(data_path.display().to_string())),
    };

    let mut labels = Vec::with_capacity(n_rows);
    let mut first_stamp = None;
    let mut last_stamp = None;
    for (i, line) in labels_text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        let Some(first) = toks.next() else { continue };
        let label = match first.trim_matches('"') {
            "-1" => 0,
            "1" | "+1" => 1,
            other => {
                return Err(Error::Label(format!(
                    "line {}: expected -1 or 1, found {other:?}",
                    i + 1
                )))
            }
        };
        labels.push(label);
        let stamp = toks.collect::<Vec<_>>().join(" ");
        let stamp = stamp.trim_matches('"').to_string();
        if !stamp.is_empty() {
            first_stamp.get_or_insert_with(|| stamp.clone());
            last_stamp = Some(stamp);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput(labels_path.display().to_string()));
    }
    if labels.len() != n_rows {
        return Err(Error::RowCountMismatch {
            data: n_rows,
            labels: labels.len(),
        });
    }

    let features = FeatureMatrix::from_raw(n_rows, (0..n_cols).collect(), cells)?;
    let mut ds = Dataset::new(features, labels)?;
    ds.record(
        "load_secom",
        format!(
            "data={} labels={} rows={n_rows} cols={n_cols}",
            data_path.display(),
            labels_path.display()
        ),
        Vec::new(),
    );
    ds.record(
        "timestamps",
        format!(
            "first={} last={}",
            first_stamp.as_deref().unwrap_or("-"),
            last_stamp.as_deref().unwrap_or("-")
        ),
        Vec::new(),
    );
    Ok(ds)
}

/// Loads a delimited text file with a header row.
///
/// The label column must hold exactly two distinct values; the less frequent
/// one becomes class 1 (on a count tie, the value that sorts last). Every other
/// column is a feature whose id is its 0-based position among the feature
/// columns. Empty fields and any of `missing_tokens` are missing.
pub fn load_delimited(
    path: impl AsRef<Path>,
    label_column: &str,
    delimiter: u8,
    missing_tokens: &[&str],
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Label(format!("label column {label_column:?} not found")))?;
    let n_features = headers.len() - 1;

    let mut cells = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        let line = i + 2;
        if rec.len() != headers.len() {
            return Err(Error::RaggedRow {
                line,
                expected: headers.len(),
                found: rec.len(),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(field.to_string());
            } else if missing_tokens.contains(&field) {
                cells.push(f64::NAN);
            } else {
                cells.push(parse_cell(field, line, j + 1)?);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }

    let mut distinct: Vec<(String, usize)> = Vec::new();
    for l in &raw_labels {
        match distinct.iter_mut().find(|(v, _)| v == l) {
            Some((_, n)) => *n += 1,
            None => distinct.push((l.clone(), 1)),
        }
    }
    if distinct.len() != 2 {
        return Err(Error::Label(format!(
            "label column must hold exactly two values, found {}",
            distinct.len()
        )));
    }
    distinct.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let positive = distinct[1].0.clone();
    let labels = raw_labels.iter().map(|l| u8::from(*l == positive)).collect();

    let n_rows = raw_labels.len();
    let features = FeatureMatrix::from_raw(n_rows, (0..n_features).collect(), cells)?;
    let mut ds = Dataset::new(features, labels)?;
    ds.record(
        "load_delimited",
        format!(
            "path={} label_column={label_column} positive={positive}",
            path.display()
        ),
        Vec::new(),
    );
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column_id: usize,
    pub missing_fraction: f64,
    pub n_present: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Sample standard deviation.
    pub std: Option<f64>,
    /// Fisher-Pearson coefficient g1; 0 for constant columns or fewer than 3 values.
    pub skewness: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub n_unique: usize,
    pub is_constant: bool,
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Statistics over the present values of one raw column.
pub fn stats_of(column_id: usize, raw: &[f64]) -> ColumnStats {
    let mut present: Vec<f64> = raw.iter().copied().filter(|v| !v.is_nan()).collect();
    let n = present.len();
    let missing_fraction = if raw.is_empty() {
        0.0
    } else {
        (raw.len() - n) as f64 / raw.len() as f64
    };
    if n == 0 {
        return ColumnStats {
            column_id,
            missing_fraction,
            n_present: 0,
            mean: None,
            median: None,
            std: None,
            skewness: None,
            min: None,
            max: None,
            n_unique: 0,
            is_constant: false,
        };
    }
    present.sort_by(f64::total_cmp);
    let min = present[0];
    let max = present[n - 1];
    let is_constant = min == max;
    let mut n_unique = 1;
    for w in present.windows(2) {
        if w[0] != w[1] {
            n_unique += 1;
        }
    }
    let mean = present.iter().sum::<f64>() / n as f64;
    let (std, skewness) = if is_constant {
        (0.0, 0.0)
    } else {
        let (m2, m3) = present.iter().fold((0.0, 0.0), |(s2, s3), &v| {
            let d = v - mean;
            (s2 + d * d, s3 + d * d * d)
        });
        let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
        let m2 = m2 / n as f64;
        let m3 = m3 / n as f64;
        let skew = if n < 3 || m2 == 0.0 {
            0.0
        } else {
            m3 / m2.powf(1.5)
        };
        (std, skew)
    };
    ColumnStats {
        column_id,
        missing_fraction,
        n_present: n,
        mean: Some(mean),
        median: median_of_sorted(&present),
        std: Some(std),
        skewness: Some(skewness),
        min: Some(min),
        max: Some(max),
        n_unique,
        is_constant,
    }
}

/// One [`ColumnStats`] per column, over present values only.
pub fn column_stats(d: &Dataset) -> Vec<ColumnStats> {
    let fm = &d.features;
    (0..fm.n_cols())
        .into_par_iter()
        .map(|c| stats_of(fm.column_ids()[c], &fm.column(c)))
        .collect()
}

/// Missing-cell fractions reported two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingSummary {
    pub missing_cells: usize,
    /// Over every cell of the table.
    pub overall_fraction: f64,
    /// Columns with at least one missing cell.
    pub affected_columns: usize,
    /// Over the cells of affected columns only.
    pub affected_fraction: f64,
}

pub fn missing_summary(d: &Dataset) -> MissingSummary {
    let fm = &d.features;
    let mut per_col = vec![0usize; fm.n_cols()];
    for r in 0..fm.n_rows() {
        for (c, v) in fm.row(r).iter().enumerate() {
            if v.is_nan() {
                per_col[c] += 1;
            }
        }
    }
    let missing_cells: usize = per_col.iter().sum();
    let affected_columns = per_col.iter().filter(|&&n| n > 0).count();
    let total = fm.n_rows() * fm.n_cols();
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    MissingSummary {
        missing_cells,
        overall_fraction: frac(missing_cells, total),
        affected_columns,
        affected_fraction: frac(missing_cells, affected_columns * fm.n_rows()),
    }
}

/// Pearson correlation over rows where both values are present.
///
/// `None` with fewer than two shared rows or zero variance on the shared rows.
pub fn pearson_pairwise(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut n = 0usize;
    let (mut sa, mut sb) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        if !x.is_nan() && !y.is_nan() {
            n += 1;
            sa += x;
            sb += y;
        }
    }
    if n < 2 {
        return None;
    }
    let (ma, mb) = (sa / n as f64, sb / n as f64);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        if !x.is_nan() && !y.is_nan() {
            let dx = x - ma;
            let dy = y - mb;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Symmetric pairwise-complete correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub column_ids: Vec<usize>,
    values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.column_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n() + j]
    }
}

pub fn correlation_matrix(d: &Dataset) -> CorrelationMatrix {
    let cols = d.features.columns();
    let n = cols.len();
    let upper: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if i == j {
                        pearson_pairwise(&cols[i], &cols[i]).map(|_| 1.0)
                    } else {
                        pearson_pairwise(&cols[i], &cols[j])
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![None; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    CorrelationMatrix {
        column_ids: d.column_ids().to_vec(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ds(rows: &[Vec<Option<f64>>], labels: Vec<u8>) -> Dataset {
        let n_cols = rows[0].len();
        let cells = rows.iter().flatten().copied().collect();
        let fm = FeatureMatrix::from_options(rows.len(), (0..n_cols).collect(), cells).unwrap();
        Dataset::new(fm, labels).unwrap()
    }

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn secom_format_round() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(&dir, "d", "1.5 NaN 3\n4 5 6\n");
        let labels = write(
            &dir,
            "l",
            "-1 \"19/07/2008 11:55:00\"\n1 \"19/07/2008 12:32:00\"\n",
        );
        let d = load_secom(&data, &labels).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.n_cols(), 3);
        assert_eq!(d.labels, vec![0, 1]);
        assert_eq!(d.features.get(0, 1), None);
        assert_eq!(d.features.get(0, 0), Some(1.5));
        assert!(d.provenance.iter().any(|p| p.parameters.contains("12:32:00")));
    }

    #[test]
    fn secom_empty_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(&dir, "e", "");
        let labels = write(&dir, "l", "-1\n");
        let err = load_secom(&empty, &labels).unwrap_err();
        assert!(err.to_string().contains("empty input"), "{err}");

        let rows: String = (0..10).map(|i| format!("{i} 1\n")).collect();
        let data = write(&dir, "d", &rows);
        let labs: String = (0..9).map(|_| "-1 x\n").collect();
        let labels = write(&dir, "l9", &labs);
        let err = load_secom(&data, &labels).unwrap_err();
        assert!(err.to_string().contains("row-count mismatch"), "{err}");
    }

    #[test]
    fn secom_rejects_bad_token() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(&dir, "d", "1 nan\n");
        let labels = write(&dir, "l", "1\n");
        assert!(matches!(
            load_secom(&data, &labels),
            Err(Error::Parse { line: 1, field: 2, .. })
        ));
    }

    #[test]
    fn delimited_minority_maps_to_positive() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,y,label\n1,2,A\n3,4,A\n5,?,A\n7,8,B\n");
        let d = load_delimited(&p, "label", b',', &["?"]).unwrap();
        assert_eq!(d.labels, vec![0, 0, 0, 1]);
        assert_eq!(d.features.get(2, 1), None);
    }

    #[test]
    fn delimited_three_labels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,label\n1,A\n2,B\n3,C\n");
        assert!(matches!(load_delimited(&p, "label", b',', &[]), Err(Error::Label(_))));
        assert!(matches!(load_delimited(&p, "nope", b',', &[]), Err(Error::Label(_))));
    }

    #[test]
    fn delimited_all_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x;y;label\nNA;;0\nNA;NA;1\n");
        let d = load_delimited(&p, "label", b';', &["NA"]).unwrap();
        for s in column_stats(&d) {
            assert_eq!(s.missing_fraction, 1.0);
            assert!(!s.is_constant);
            assert_eq!(s.mean, None);
        }
    }

    #[test]
    fn constant_column_stats() {
        let s = stats_of(0, &[5.0, 5.0, 5.0, 5.0]);
        assert!(s.is_constant);
        assert_eq!(s.std, Some(0.0));
        assert_eq!(s.skewness, Some(0.0));
        assert_eq!(s.n_unique, 1);
    }

    #[test]
    fn stats_with_missing() {
        let s = stats_of(0, &[1.0, 2.0, 3.0, f64::NAN]);
        assert_eq!(s.missing_fraction, 0.25);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.median, Some(2.0));
        assert_eq!(s.skewness, Some(0.0));
        assert!(!s.is_constant);
    }

    #[test]
    fn skewness_matches_fisher_g1() {
        // g1 of [0,0,0,1]: mean .25, m2 = .1875, m3 = .09375
        let s = stats_of(0, &[0.0, 0.0, 0.0, 1.0]);
        let expected = 0.09375 / 0.1875f64.powf(1.5);
        assert!((s.skewness.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn correlation_diagonal_and_negation() {
        let rows: Vec<Vec<Option<f64>>> = [1.0, 2.0, 4.0, 3.0, 7.0]
            .iter()
            .map(|&x| vec![Some(x), Some(-x), Some(1.0)])
            .collect();
        let d = ds(&rows, vec![0, 1, 0, 1, 0]);
        let m = correlation_matrix(&d);
        assert_eq!(m.get(0, 0), Some(1.0));
        assert!((m.get(0, 1).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m.get(2, 2), None);
        assert_eq!(m.get(0, 2), None);
    }

    #[test]
    fn correlation_matches_hand_pearson() {
        // x = 1..5, y = [2,1,4,3,5]: mean 3 each, Sxy = 8, Sxx = Syy = 10 -> 0.8
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 1.0, 4.0, 3.0, 5.0];
        let rows: Vec<_> = xs.iter().zip(ys).map(|(&x, y)| vec![Some(x), Some(y)]).collect();
        let m = correlation_matrix(&ds(&rows, vec![0, 1, 0, 1, 0]));
        assert!((m.get(0, 1).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn correlation_pairwise_complete() {
        let rows = vec![
            vec![Some(1.0), Some(1.0)],
            vec![Some(2.0), None],
            vec![Some(3.0), Some(3.0)],
            vec![None, Some(100.0)],
            vec![Some(4.0), Some(4.0)],
        ];
        let m = correlation_matrix(&ds(&rows, vec![0, 1, 0, 1, 0]));
        assert!((m.get(0, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_summary_both_ways() {
        let rows = vec![
            vec![Some(1.0), None],
            vec![Some(2.0), Some(1.0)],
            vec![Some(3.0), None],
            vec![Some(4.0), Some(1.0)],
        ];
        let s = missing_summary(&ds(&rows, vec![0, 1, 0, 1]));
        assert_eq!(s.missing_cells, 2);
        assert_eq!(s.overall_fraction, 0.25);
        assert_eq!(s.affected_columns, 1);
        assert_eq!(s.affected_fraction, 0.5);
    }

    #[test]
    fn leakage_guard() {
        let d = ds(&[vec![Some(1.0)], vec![Some(2.0)]], vec![0, 1]).with_partition(Partition::Test);
        assert!(matches!(d.require_fit_partition("x"), Err(Error::Leakage("x"))));
    }
}
