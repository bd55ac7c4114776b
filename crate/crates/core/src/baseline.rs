//! Linear logistic regression fitted by iteratively reweighted least squares.
//!
//! Minimizes `Σ softplus(ηᵢ) − yᵢ ηᵢ + ½ λ ‖w‖²` with `η = w₀ + wᵀx`.
//! Newton steps that increase the objective are halved until they do not.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hmc::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegOptions {
    pub max_iter: usize,
    /// Convergence threshold on the gradient norm of the objective.
    pub tol: f64,
    pub ridge: f64,
    /// Center and scale each covariate before fitting.
    pub standardize: bool,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        LogRegOptions {
            max_iter: 100,
            tol: 1e-8,
            ridge: 1e-8,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// Intercept first, on the original covariate scale.
    pub weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn design<P: AsRef<[f64]>>(inputs: &[P], center: &[f64], scale: &[f64]) -> DMatrix<f64> {
    let d = center.len();
    DMatrix::from_fn(inputs.len(), d + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            (inputs[i].as_ref()[j - 1] - center[j - 1]) / scale[j - 1]
        }
    })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, ridge: f64) -> f64 {
    let eta = x * w;
    let nll: f64 = eta.iter().zip(y.iter()).map(|(&e, &t)| softplus(e) - t * e).sum();
    nll + 0.5 * ridge * w.norm_squared()
}

/// Fits the model on a dataset with both classes present.
pub fn fit_logreg(train: &Dataset, opts: &LogRegOptions) -> Result<LogRegModel> {
    train.require_both_classes()?;
    fit_logreg_raw(&train.inputs(), &train.labels(), opts)
}

/// [`fit_logreg`] on bare inputs and labels.
pub fn fit_logreg_raw<P: AsRef<[f64]>>(inputs: &[P], labels: &[u8], opts: &LogRegOptions) -> Result<LogRegModel> {
    if inputs.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} inputs for {} labels", inputs.len(), labels.len())));
    }
    if !(opts.ridge >= 0.0 && opts.tol > 0.0) {
        return Err(Error::invalid("ridge must be non-negative and tol positive"));
    }
    let ones = labels.iter().filter(|&&y| y == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::SingleClass(if ones == 0 { 0 } else { 1 }));
    }
    let n = inputs.len();
    let d = inputs[0].as_ref().len();
    let (center, scale) = if opts.standardize {
        let mut c = vec![0.0; d];
        let mut s = vec![0.0; d];
        for p in inputs {
            for (k, v) in p.as_ref().iter().enumerate() {
                c[k] += v / n as f64;
            }
        }
        for p in inputs {
            for (k, v) in p.as_ref().iter().enumerate() {
                s[k] += (v - c[k]).powi(2) / n as f64;
            }
        }
        let s = s.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        (c, s)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let x = design(inputs, &center, &scale);
    let y = DVector::from_iterator(n, labels.iter().map(|&v| v as f64));
    let mut w = DVector::zeros(d + 1);
    let mut obj = objective(&x, &y, &w, opts.ridge);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let eta = &x * &w;
        let p = eta.map(sigmoid);
        let grad = x.tr_mul(&(&p - &y)) + &w * opts.ridge;
        if grad.norm() <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let weights = p.map(|v| v * (1.0 - v));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= weights[i];
        }
        let mut hess = x.tr_mul(&xw);
        for k in 0..=d {
            hess[(k, k)] += opts.ridge;
        }
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let cand = &w - &step * t;
            let cand_obj = objective(&x, &y, &cand, opts.ridge);
            if cand_obj <= obj {
                w = cand;
                obj = cand_obj;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !converged {
        let p = (&x * &w).map(sigmoid);
        let grad = x.tr_mul(&(&p - &y)) + &w * opts.ridge;
        converged = grad.norm() <= opts.tol;
    }

    // Map back to the original covariate scale.
    let mut weights = vec![0.0; d + 1];
    weights[0] = w[0];
    for k in 0..d {
        weights[k + 1] = w[k + 1] / scale[k];
        weights[0] -= w[k + 1] * center[k] / scale[k];
    }
    Ok(LogRegModel {
        weights,
        converged,
        iterations,
    })
}

/// `sigmoid(w₀ + wᵀx)` for each input.
pub fn predict_logreg<P: AsRef<[f64]>>(model: &LogRegModel, inputs: &[P]) -> Vec<f64> {
    inputs
        .iter()
        .map(|p| {
            let eta = model.weights[0]
                + model.weights[1..].iter().zip(p.as_ref()).map(|(w, v)| w * v).sum::<f64>();
            sigmoid(eta)
        })
        .collect()
}
