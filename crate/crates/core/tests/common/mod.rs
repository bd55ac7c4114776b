#![allow(dead_code)]

use std::path::PathBuf;

use dpgp::experiment::ExperimentConfig;
use dpgp::gp::{self, CholeskyGram, GpConfig};
use dpgp::hmc::{self, HmcConfig, Likelihood};
use nalgebra::{DMatrix, DVector};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(config_path(name)).expect("checked-in config loads")
}

/// `y = f + ε`, `ε ~ N(0, noise)`.
pub struct GaussianLikelihood {
    pub y: DVector<f64>,
    pub noise: f64,
}

impl Likelihood for GaussianLikelihood {
    fn neg_log_likelihood(&self, f: &DVector<f64>) -> (f64, DVector<f64>) {
        let r = f - &self.y;
        (0.5 * r.norm_squared() / self.noise, r / self.noise)
    }

    fn n_points(&self) -> usize {
        self.y.len()
    }
}

/// Flat likelihood: the sampler targets the GP prior.
pub struct PriorOnly(pub usize);

impl Likelihood for PriorOnly {
    fn neg_log_likelihood(&self, _f: &DVector<f64>) -> (f64, DVector<f64>) {
        (0.0, DVector::zeros(self.0))
    }

    fn n_points(&self) -> usize {
        self.0
    }
}

pub fn hook_inputs() -> Vec<[f64; 2]> {
    vec![[-1.0, 0.2], [-0.3, -0.5], [0.0, 0.8], [0.6, 0.1], [1.1, -0.7]]
}

pub fn hook_gp() -> GpConfig {
    GpConfig { signal_variance: 1.5, lengthscale: 0.8, jitter: 1e-6, mean: 0.0 }
}

pub fn hook_hmc() -> HmcConfig {
    HmcConfig { warmup: 500, samples: 8000, leapfrog_steps: 8, seed: 11, ..HmcConfig::default() }
}

/// Batch-means estimate of `E[g]` and its Monte Carlo standard error.
pub fn batch_mean(values: &[f64], batches: usize) -> (f64, f64) {
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (grand, (var / batches as f64).sqrt())
}

/// Compares draw means and covariances with the target moments, allowing
/// `z` Monte Carlo standard errors per entry. Returns the largest z-score.
pub fn check_moments(draws: &DMatrix<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>, z: f64) -> Result<f64, String> {
    let n = draws.ncols();
    let batches = 40;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let col: Vec<f64> = draws.column(i).iter().copied().collect();
        let (m, se) = batch_mean(&col, batches);
        let score = (m - mean[i]).abs() / se;
        worst = worst.max(score);
        if score > z {
            return Err(format!("mean[{i}] = {m:.4}, target {:.4}, {score:.1} standard errors", mean[i]));
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let prod: Vec<f64> = draws
                .row_iter()
                .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                .collect();
            let (c, se) = batch_mean(&prod, batches);
            let score = (c - cov[(i, j)]).abs() / se;
            worst = worst.max(score);
            if score > z {
                return Err(format!(
                    "cov[{i},{j}] = {c:.4}, target {:.4}, {score:.1} standard errors",
                    cov[(i, j)]
                ));
            }
        }
    }
    Ok(worst)
}

pub fn sample_with<L: Likelihood>(lik: &L, chol: &CholeskyGram, cfg: &HmcConfig) -> DMatrix<f64> {
    hmc::sample_chains_with(lik, chol, 0.0, cfg, 1).expect("sampler runs").draws
}

/// Gaussian-likelihood hook against the conjugate posterior.
pub fn gaussian_hook_check() -> Result<String, String> {
    let x = hook_inputs();
    let cfg = hook_gp();
    let chol = gp::gram(&x, &cfg).map_err(|e| e.to_string())?;
    let y = DVector::from_vec(vec![0.8, -0.4, 1.2, 0.3, -1.0]);
    let noise = 0.3;
    let lik = GaussianLikelihood { y: y.clone(), noise };
    let draws = sample_with(&lik, &chol, &hook_hmc());

    // Posterior of f: covariance K − K(K + σ²I)⁻¹K, mean K(K + σ²I)⁻¹y,
    // where K already carries the nugget the sampler sees.
    let k = chol.factor() * chol.factor().transpose();
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += noise;
    }
    let a_inv = a.try_inverse().ok_or("singular system")?;
    let mean = &k * &a_inv * &y;
    let cov = &k - &k * &a_inv * &k;
    let worst = check_moments(&draws, &mean, &cov, 4.0)?;
    Ok(format!("largest deviation {worst:.2} MCSE over 5 means and 15 covariances"))
}

/// Prior-only hook against `N(0, K)`.
pub fn prior_hook_check() -> Result<String, String> {
    let x = hook_inputs();
    let cfg = hook_gp();
    let chol = gp::gram(&x, &cfg).map_err(|e| e.to_string())?;
    let draws = sample_with(&PriorOnly(x.len()), &chol, &hook_hmc());
    let k = chol.factor() * chol.factor().transpose();
    let worst = check_moments(&draws, &DVector::zeros(x.len()), &k, 4.0)?;
    Ok(format!("largest deviation {worst:.2} MCSE over 5 means and 15 covariances"))
}
