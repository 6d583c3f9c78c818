//! Logistic regression and linear SVM.
//!
//! Both losses are sample-weighted means normalized by the total weight, so
//! an integer weight `w` on a row is the same as `w` copies of it.

use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;

use super::{sample_weights, ModelFamily, ModelSpec};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Row-major complete design with labels and sample weights.
pub(crate) struct Design<'a> {
    pub x: &'a [f64],
    pub p: usize,
    pub y: &'a [u8],
    pub sw: &'a [f64],
    /// Per-coordinate multipliers on the L2 term; `None` means all ones.
    pub pen: Option<&'a [f64]>,
}

impl Design<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn margin(&self, i: usize, beta: &[f64], bias: f64) -> f64 {
        bias + self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }

    fn total_weight(&self) -> f64 {
        self.sw.iter().sum()
    }

    fn pen(&self, j: usize) -> f64 {
        self.pen.map_or(1.0, |p| p[j])
    }

    /// `strength/2 Σ pen_j β_j²` and its gradient, added in place.
    fn add_penalty(&self, strength: f64, beta: &[f64], loss: &mut f64, g: &mut [f64]) {
        for (j, (gj, bj)) in g.iter_mut().zip(beta).enumerate() {
            *loss += 0.5 * strength * self.pen(j) * bj * bj;
            *gj += strength * self.pen(j) * bj;
        }
    }
}

/// Weighted column standardization `x̃ = (x − μ) / σ`. Since the bias is
/// unpenalized, fitting on `x̃` with L2 multipliers `1/σ²` is an exact
/// reparametrization of the raw objective; it only improves conditioning.
struct Standardized {
    x: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    pen: Vec<f64>,
}

fn standardize(d: &Design) -> Standardized {
    let wsum = d.total_weight();
    let mut mu = vec![0.0; d.p];
    for i in 0..d.n() {
        for (m, v) in mu.iter_mut().zip(d.row(i)) {
            *m += d.sw[i] * v / wsum;
        }
    }
    let mut var = vec![0.0; d.p];
    for i in 0..d.n() {
        for ((s, v), m) in var.iter_mut().zip(d.row(i)).zip(&mu) {
            *s += d.sw[i] * (v - m) * (v - m) / wsum;
        }
    }
    // constant columns keep unit scale; spread at rounding level counts as constant
    let sigma: Vec<f64> = var
        .iter()
        .zip(&mu)
        .map(|(&v, m)| {
            let sd = v.sqrt();
            if sd > 1e-9 * (1.0 + m.abs()) {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let mut x = Vec::with_capacity(d.x.len());
    for i in 0..d.n() {
        x.extend(d.row(i).iter().zip(&mu).zip(&sigma).map(|((v, m), s)| (v - m) / s));
    }
    let pen = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    Standardized { x, mu, sigma, pen }
}

impl Standardized {
    fn design<'a>(&'a self, d: &Design<'a>) -> Design<'a> {
        Design {
            x: &self.x,
            p: d.p,
            y: d.y,
            sw: d.sw,
            pen: Some(&self.pen),
        }
    }

    fn to_raw(&self, fit: LinearFit) -> LinearFit {
        let weights: Vec<f64> = fit.weights.iter().zip(&self.sigma).map(|(b, s)| b / s).collect();
        let bias = fit.bias - weights.iter().zip(&self.mu).map(|(b, m)| b * m).sum::<f64>();
        LinearFit {
            weights,
            bias,
            trace: fit.trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Mean weighted log-loss plus `l2/2 ‖β‖²`; the bias is not penalized.
pub(crate) fn logistic_objective(d: &Design, l2: f64, beta: &[f64], bias: f64) -> LossGradient {
    let wsum = d.total_weight();
    let mut loss = 0.0;
    let mut g = vec![0.0; d.p];
    let mut gb = 0.0;
    for i in 0..d.n() {
        let z = d.margin(i, beta, bias);
        let y = d.y[i] as f64;
        let w = d.sw[i] / wsum;
        loss += w * (softplus(z) - y * z);
        let r = w * (sigmoid(z) - y);
        gb += r;
        for (gj, xj) in g.iter_mut().zip(d.row(i)) {
            *gj += r * xj;
        }
    }
    d.add_penalty(l2, beta, &mut loss, &mut g);
    LossGradient {
        loss,
        weights: g,
        bias: gb,
    }
}

/// `λ/2 ‖β‖² + mean weighted max(0, 1 − t·z)` with `t = ±1`. Rows flagged in
/// `skip` are left out of both loss and subgradient.
pub(crate) fn hinge_objective(d: &Design, lambda: f64, beta: &[f64], bias: f64, skip: Option<&[bool]>) -> LossGradient {
    let wsum = d.total_weight();
    let mut loss = 0.0;
    let mut g = vec![0.0; d.p];
    let mut gb = 0.0;
    for i in 0..d.n() {
        if skip.is_some_and(|s| s[i]) {
            continue;
        }
        let t = if d.y[i] == 1 { 1.0 } else { -1.0 };
        let slack = 1.0 - t * d.margin(i, beta, bias);
        if slack > 0.0 {
            let w = d.sw[i] / wsum;
            loss += w * slack;
            gb -= w * t;
            for (gj, xj) in g.iter_mut().zip(d.row(i)) {
                *gj -= w * t * xj;
            }
        }
    }
    d.add_penalty(lambda, beta, &mut loss, &mut g);
    LossGradient {
        loss,
        weights: g,
        bias: gb,
    }
}

pub(crate) fn svm_lambda(c: f64, d: &Design) -> f64 {
    1.0 / (c * d.total_weight())
}

pub(crate) struct LinearFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub trace: Vec<f64>,
}

fn divergence(step: usize, trace: &[f64]) -> Error {
    Error::Divergence {
        step,
        trace_tail: trace[trace.len().saturating_sub(5)..].to_vec(),
    }
}

/// Full-batch gradient descent in standardized coordinates. A step that
/// would raise the loss is halved until it does not, so the trace never
/// increases.
pub(crate) fn fit_logistic(raw: &Design, lr: f64, epochs: usize, l2: f64) -> Result<LinearFit> {
    let s = standardize(raw);
    let d = &s.design(raw);
    let mut beta = vec![0.0; d.p];
    let mut bias = 0.0;
    let mut cur = logistic_objective(d, l2, &beta, bias);
    let mut trace = vec![cur.loss];
    if !cur.loss.is_finite() {
        return Err(divergence(0, &trace));
    }
    for epoch in 1..=epochs {
        let mut step = lr;
        loop {
            let cand_beta: Vec<f64> = beta.iter().zip(&cur.weights).map(|(b, g)| b - step * g).collect();
            let cand_bias = bias - step * cur.bias;
            let next = logistic_objective(d, l2, &cand_beta, cand_bias);
            if next.loss.is_finite() && next.loss <= cur.loss {
                beta = cand_beta;
                bias = cand_bias;
                cur = next;
                break;
            }
            step /= 2.0;
            if step < lr * 1e-12 {
                break;
            }
        }
        if !cur.loss.is_finite() {
            return Err(divergence(epoch, &trace));
        }
        trace.push(cur.loss);
    }
    Ok(s.to_raw(LinearFit {
        weights: beta,
        bias,
        trace,
    }))
}

/// Subgradient descent in standardized coordinates with step `lr / √t`;
/// returns the best iterate seen. The L2 term takes an implicit (proximal)
/// step so large per-coordinate multipliers cannot overshoot.
pub(crate) fn fit_svm(raw: &Design, lr: f64, epochs: usize, c: f64) -> Result<LinearFit> {
    let lambda = svm_lambda(c, raw);
    let s = standardize(raw);
    let d = &s.design(raw);
    let mut beta = vec![0.0; d.p];
    let mut bias = 0.0;
    let mut cur = hinge_objective(d, lambda, &beta, bias, None);
    let mut trace = vec![cur.loss];
    let mut best = (cur.loss, beta.clone(), bias);
    for t in 1..=epochs {
        let step = lr / (t as f64).sqrt();
        for (j, (b, g)) in beta.iter_mut().zip(&cur.weights).enumerate() {
            let shrink = step * lambda * d.pen(j);
            let hinge_grad = g - lambda * d.pen(j) * *b;
            *b = (*b - step * hinge_grad) / (1.0 + shrink);
        }
        bias -= step * cur.bias;
        cur = hinge_objective(d, lambda, &beta, bias, None);
        if !cur.loss.is_finite() {
            return Err(divergence(t, &trace));
        }
        trace.push(cur.loss);
        if cur.loss < best.0 {
            best = (cur.loss, beta.clone(), bias);
        }
    }
    Ok(s.to_raw(LinearFit {
        weights: best.1,
        bias: best.2,
        trace,
    }))
}

fn check_family(spec: &ModelSpec) -> Result<()> {
    match spec.family {
        ModelFamily::Logistic | ModelFamily::LinearSvm => Ok(()),
        f => Err(Error::invalid(format!("gradient checks need a linear family, got {f}"))),
    }
}

/// Training objective of a linear spec and its (sub)gradient at the given
/// parameters.
pub fn loss_and_gradient(spec: &ModelSpec, data: &Dataset, weights: &[f64], bias: f64) -> Result<LossGradient> {
    check_family(spec)?;
    data.require_complete()?;
    if weights.len() != data.n_cols() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: data.n_cols(),
        });
    }
    let (sw, _) = sample_weights(&spec.class_weight, &data.labels)?;
    let d = Design {
        x: data.features.raw_cells(),
        p: data.n_cols(),
        y: &data.labels,
        sw: &sw,
        pen: None,
    };
    let hp = &spec.hyperparameters;
    Ok(match spec.family {
        ModelFamily::Logistic => logistic_objective(&d, hp.l2, weights, bias),
        _ => hinge_objective(&d, svm_lambda(hp.c, &d), weights, bias, None),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Rows whose hinge term is within perturbation reach of its kink.
    pub excluded_rows: Vec<usize>,
}

/// `|a − n| / max(|a|, |n|, 1e-4)` for analytic `a` and numeric `n`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Compares the analytic gradient with central differences of step `epsilon`
/// at the given parameters. For the hinge loss, rows whose margin is within
/// `10 ε (1 + ‖x‖₁)` of the kink are excluded from both sides.
pub fn gradient_check_at(spec: &ModelSpec, data: &Dataset, weights: &[f64], bias: f64, epsilon: f64) -> Result<GradientCheck> {
    check_family(spec)?;
    data.require_complete()?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let (sw, _) = sample_weights(&spec.class_weight, &data.labels)?;
    let d = Design {
        x: data.features.raw_cells(),
        p: data.n_cols(),
        y: &data.labels,
        sw: &sw,
        pen: None,
    };
    let hp = &spec.hyperparameters;
    let (objective, skip): (Box<dyn Fn(&[f64], f64) -> LossGradient>, Vec<bool>) = match spec.family {
        ModelFamily::Logistic => (
            Box::new(|b: &[f64], c: f64| logistic_objective(&d, hp.l2, b, c)),
            vec![false; d.n()],
        ),
        _ => {
            let lambda = svm_lambda(hp.c, &d);
            let skip: Vec<bool> = (0..d.n())
                .map(|i| {
                    let t = if d.y[i] == 1 { 1.0 } else { -1.0 };
                    let reach = 10.0 * epsilon * (1.0 + d.row(i).iter().map(|v| v.abs()).sum::<f64>());
                    (1.0 - t * d.margin(i, weights, bias)).abs() <= reach
                })
                .collect();
            let s = skip.clone();
            (
                Box::new(move |b: &[f64], c: f64| hinge_objective(&d, lambda, b, c, Some(&s))),
                skip,
            )
        }
    };
    let analytic = objective(weights, bias);
    let mut worst = 0.0f64;
    let mut probe = weights.to_vec();
    for j in 0..weights.len() {
        probe[j] = weights[j] + epsilon;
        let up = objective(&probe, bias).loss;
        probe[j] = weights[j] - epsilon;
        let down = objective(&probe, bias).loss;
        probe[j] = weights[j];
        worst = worst.max(relative_error(analytic.weights[j], (up - down) / (2.0 * epsilon)));
    }
    let up = objective(weights, bias + epsilon).loss;
    let down = objective(weights, bias - epsilon).loss;
    worst = worst.max(relative_error(analytic.bias, (up - down) / (2.0 * epsilon)));
    Ok(GradientCheck {
        max_relative_error: worst,
        excluded_rows: skip.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect(),
    })
}

/// [`gradient_check_at`] with parameters drawn from `N(0, 0.5²)` on the
/// spec's seed; returns the maximum relative error.
pub fn gradient_check(spec: &ModelSpec, data: &Dataset, epsilon: f64) -> Result<f64> {
    let mut rng = substream(spec.seed, 0);
    let normal = Normal::new(0.0, 0.5).expect("valid normal");
    let weights: Vec<f64> = (0..data.n_cols()).map(|_| normal.sample(&mut rng)).collect();
    let bias = normal.sample(&mut rng);
    Ok(gradient_check_at(spec, data, &weights, bias, epsilon)?.max_relative_error)
}
