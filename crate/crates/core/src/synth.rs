//! Seeded generator for tables shaped like the SECOM sensor data.
//!
//! Column roles are shuffled across ids: high-missing columns, constant
//! columns, and blocks of strongly correlated columns that share one latent
//! factor. A few latent factors shift with the label.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq)]
pub struct SecomLikeParams {
    pub n_rows: usize,
    pub n_positive: usize,
    /// Columns missing in 55% to 90% of rows.
    pub n_high_missing: usize,
    /// Columns whose present values are all equal.
    pub n_constant: usize,
    /// Independent latent factors; each owns one block of columns.
    pub n_blocks: usize,
    /// Columns spread over the blocks, at least one per block.
    pub n_block_columns: usize,
    /// Latent factors whose mean shifts for positive rows.
    pub n_informative: usize,
    /// Largest mean shift, in latent standard deviations.
    pub max_shift: f64,
    /// MCAR fraction in every other column.
    pub residual_missing: f64,
    pub seed: u64,
}

impl Default for SecomLikeParams {
    fn default() -> Self {
        SecomLikeParams {
            n_rows: 1567,
            n_positive: 104,
            n_high_missing: 28,
            n_constant: 116,
            n_blocks: 204,
            n_block_columns: 447,
            n_informative: 16,
            max_shift: 1.0,
            residual_missing: 0.013,
            seed: 0,
        }
    }
}

impl SecomLikeParams {
    pub fn n_cols(&self) -> usize {
        self.n_high_missing + self.n_constant + self.n_block_columns
    }
}

#[derive(Clone, Copy)]
enum Role {
    HighMissing,
    Constant,
    Block(usize),
}

fn normal(rng: &mut impl rand::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates the table. Row order, positive rows and column roles all come
/// from `p.seed`.
pub fn secom_like(p: &SecomLikeParams) -> Result<Dataset> {
    if p.n_positive == 0 || p.n_positive >= p.n_rows {
        return Err(Error::invalid("n_positive must be in 1..n_rows"));
    }
    if p.n_blocks == 0 || p.n_block_columns < p.n_blocks || p.n_informative > p.n_blocks {
        return Err(Error::invalid("need n_informative <= n_blocks <= n_block_columns"));
    }
    if !(0.0..0.5).contains(&p.residual_missing) {
        return Err(Error::invalid("residual_missing must be in [0, 0.5)"));
    }
    let n = p.n_rows;
    let mut rng = substream(p.seed, 0);

    let mut labels = vec![0u8; n];
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    for &r in &rows[..p.n_positive] {
        labels[r] = 1;
    }

    let mut roles: Vec<Role> = Vec::with_capacity(p.n_cols());
    roles.extend(std::iter::repeat_n(Role::HighMissing, p.n_high_missing));
    roles.extend(std::iter::repeat_n(Role::Constant, p.n_constant));
    roles.extend((0..p.n_blocks).map(Role::Block));
    roles.extend((p.n_blocks..p.n_block_columns).map(|_| Role::Block(rng.random_range(0..p.n_blocks))));
    roles.shuffle(&mut rng);

    // Informative factors: the first n_informative blocks. Half of them shift
    // the mean, the other half also widen the positive-class spread.
    let mut latent_rng = substream(p.seed, 1);
    let latents: Vec<Vec<f64>> = (0..p.n_blocks)
        .map(|b| {
            let shift = if b < p.n_informative {
                p.max_shift * (1.0 - 0.6 * b as f64 / p.n_informative.max(1) as f64)
            } else {
                0.0
            };
            let spread = if b < p.n_informative && b % 2 == 1 { 1.8 } else { 1.0 };
            labels
                .iter()
                .map(|&y| {
                    let z = normal(&mut latent_rng);
                    if y == 1 {
                        shift + spread * z
                    } else {
                        z
                    }
                })
                .collect()
        })
        .collect();
    let skewed: Vec<bool> = (0..p.n_blocks).map(|b| b % 3 == 2).collect();

    let mut cells = vec![0.0; n * roles.len()];
    for (c, role) in roles.iter().enumerate() {
        let mut crng = substream(p.seed, 2 + c as u64);
        let scale = 10f64.powf(crng.random_range(-2.0..3.0));
        let offset = crng.random_range(-5.0..5.0) * scale;
        let (values, missing_rate): (Vec<f64>, f64) = match *role {
            Role::HighMissing => (
                (0..n).map(|_| offset + scale * normal(&mut crng)).collect(),
                crng.random_range(0.55..0.9),
            ),
            Role::Constant => (vec![offset; n], p.residual_missing),
            Role::Block(b) => (
                latents[b]
                    .iter()
                    .map(|&l| {
                        let x = l + 0.35 * normal(&mut crng);
                        let x = if skewed[b] { (0.8 * x).exp() } else { x };
                        offset + scale * x
                    })
                    .collect(),
                p.residual_missing,
            ),
        };
        for (r, v) in values.into_iter().enumerate() {
            cells[r * roles.len() + c] = if crng.random::<f64>() < missing_rate { f64::NAN } else { v };
        }
    }
    let features = FeatureMatrix::from_raw(n, (0..roles.len()).collect(), cells)?;
    let mut d = Dataset::new(features, labels)?;
    d.record("secom_like", format!("seed={}", p.seed), Vec::new());
    Ok(d)
}

/// Writes `d` as a whitespace-separated data file and a labels file in the
/// SECOM layout (`-1`/`1` followed by a quoted timestamp).
pub fn write_secom_files(d: &Dataset, data_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let mut data = String::new();
    for r in 0..d.n_rows() {
        for (c, v) in d.features.row(r).iter().enumerate() {
            if c > 0 {
                data.push(' ');
            }
            if v.is_nan() {
                data.push_str("NaN");
            } else {
                write!(data, "{v}").expect("write to string");
            }
        }
        data.push('\n');
    }
    let mut labels = String::new();
    for (r, &y) in d.labels.iter().enumerate() {
        let code = if y == 1 { "1" } else { "-1" };
        writeln!(labels, "{code} \"{:02}/07/2008 {:02}:{:02}:00\"", 1 + r % 28, r / 60 % 24, r % 60)
            .expect("write to string");
    }
    let data_path = data_path.as_ref();
    let labels_path = labels_path.as_ref();
    fs::write(data_path, data).map_err(|e| Error::io(data_path, e))?;
    fs::write(labels_path, labels).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}
