//! Hamiltonian Monte Carlo over the latent vector at the training inputs.
//!
//! The sampler runs in whitened coordinates `f = mean + L η`, where `L` is
//! the Cholesky factor of the training Gram matrix, so the GP prior becomes
//! `η ~ N(0, I)`. The potential is
//!
//! ```text
//! U(η) = ½‖η‖² + ℓ(mean + L η),     ∇U(η) = η + Lᵀ ∇ℓ(f)
//! ```
//!
//! where `ℓ` is the negative log-likelihood of the labels given `f`. The
//! default likelihood is the logistic Bernoulli surrogate; anything
//! implementing [`Likelihood`] can be plugged in.
//!
//! Each iteration draws fresh standard-normal momenta, integrates a fixed
//! number of leapfrog steps and applies a Metropolis correction. During
//! warmup the step size follows Nesterov dual averaging towards
//! `target_accept`; afterwards it is frozen at the averaged value.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::CholeskyGram;
use crate::rng::{self, Domain};

/// Minimum post-warmup acceptance rate before a run is reported as divergent.
pub const MIN_ACCEPT_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub warmup: usize,
    pub samples: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    pub initial_step_size: f64,
    /// Each iteration scales the step size by a uniform factor in
    /// `[1 − step_jitter, 1 + step_jitter]`.
    pub step_jitter: f64,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            warmup: 1000,
            samples: 1000,
            leapfrog_steps: 32,
            target_accept: 0.8,
            initial_step_size: 0.1,
            step_jitter: 0.2,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup == 0 || self.samples == 0 || self.leapfrog_steps == 0 {
            return Err(Error::invalid("warmup, samples and leapfrog_steps must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if !(self.initial_step_size > 0.0 && self.initial_step_size.is_finite()) {
            return Err(Error::invalid("initial_step_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return Err(Error::invalid("step_jitter must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Negative log-likelihood of the observations as a function of the latent
/// values at the training inputs.
pub trait Likelihood: Sync {
    /// Returns `ℓ(f)` (constants may be dropped) and `∇ℓ(f)`.
    fn neg_log_likelihood(&self, f: &DVector<f64>) -> (f64, DVector<f64>);

    fn n_points(&self) -> usize;
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli labels with a logistic link: `ℓ(f) = Σ softplus(fᵢ) − yᵢ fᵢ`.
#[derive(Debug, Clone)]
pub struct LogisticLikelihood {
    y: Vec<f64>,
}

impl LogisticLikelihood {
    pub fn new(labels: &[u8]) -> Result<Self> {
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        let ones = labels.iter().filter(|&&y| y == 1).count();
        if ones == 0 || ones == labels.len() {
            let class = if ones == 0 { 0 } else { 1 };
            return Err(Error::SingleClass(class));
        }
        Ok(LogisticLikelihood {
            y: labels.iter().map(|&y| y as f64).collect(),
        })
    }

    /// Arbitrary targets in `[0, 1]`, including non-binary ones.
    pub fn from_targets(y: Vec<f64>) -> Self {
        LogisticLikelihood { y }
    }
}

impl Likelihood for LogisticLikelihood {
    fn neg_log_likelihood(&self, f: &DVector<f64>) -> (f64, DVector<f64>) {
        let value = f.iter().zip(&self.y).map(|(&fi, &yi)| softplus(fi) - yi * fi).sum();
        let grad = DVector::from_iterator(f.len(), f.iter().zip(&self.y).map(|(&fi, &yi)| sigmoid(fi) - yi));
        (value, grad)
    }

    fn n_points(&self) -> usize {
        self.y.len()
    }
}

/// Potential energy and gradient in whitened coordinates.
pub fn potential_with<L: Likelihood + ?Sized>(
    eta: &DVector<f64>,
    likelihood: &L,
    chol: &CholeskyGram,
    mean: f64,
) -> (f64, DVector<f64>) {
    let f = chol.mul_factor(eta).add_scalar(mean);
    let (nll, g_f) = likelihood.neg_log_likelihood(&f);
    let u = 0.5 * eta.norm_squared() + nll;
    let grad = eta + chol.mul_factor_transpose(&g_f);
    (u, grad)
}

/// Potential under the logistic Bernoulli likelihood.
pub fn potential(eta: &DVector<f64>, y: &[u8], chol: &CholeskyGram, mean: f64) -> (f64, DVector<f64>) {
    let lik = LogisticLikelihood::from_targets(y.iter().map(|&v| v as f64).collect());
    potential_with(eta, &lik, chol, mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Hmc,
    Analytic,
}

/// Posterior draws of the latent vector at the training inputs.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    /// `S × n`, one draw per row.
    pub draws: DMatrix<f64>,
    pub chol: CholeskyGram,
    pub accept_rate: f64,
    pub step_size: f64,
    pub backend: BackendTag,
    /// Acceptance rate of each chain when draws come from several chains.
    pub chain_accept_rates: Vec<f64>,
}

impl LatentPosterior {
    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn n_train(&self) -> usize {
        self.draws.ncols()
    }

    /// Latent vector of draw `s`.
    pub fn draw(&self, s: usize) -> Vec<f64> {
        self.draws.row(s).iter().copied().collect()
    }

    /// `L⁻¹ (f − mean)` for every draw, one column per draw.
    pub fn whitened(&self, mean: f64) -> DMatrix<f64> {
        let mut u = self.draws.transpose();
        u.add_scalar_mut(-mean);
        self.chol.solve_lower_mut(&mut u);
        u
    }
}

/// Result of one chain in whitened coordinates.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// `S × n` whitened draws.
    pub eta: DMatrix<f64>,
    pub accept_rate: f64,
    pub step_size: f64,
    pub warmup_accept_rate: f64,
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    t: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(initial: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * initial).ln(),
            h_bar: 0.0,
            log_eps: initial.ln(),
            log_eps_bar: 0.0,
            t: 0.0,
            target,
        }
    }

    fn update(&mut self, accept_prob: f64) {
        self.t += 1.0;
        let w = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

fn standard_normal(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Leapfrog trajectory; returns the end point, its potential and gradient,
/// and the final momentum.
#[allow(clippy::too_many_arguments)]
pub(crate) fn leapfrog<L: Likelihood + ?Sized>(
    eta: &DVector<f64>,
    grad: &DVector<f64>,
    momentum: &DVector<f64>,
    step: f64,
    steps: usize,
    likelihood: &L,
    chol: &CholeskyGram,
    mean: f64,
) -> (DVector<f64>, f64, DVector<f64>, DVector<f64>) {
    let mut q = eta.clone();
    let mut p = momentum - grad * (0.5 * step);
    let mut u = f64::NAN;
    let mut g = grad.clone();
    for i in 0..steps {
        q += &p * step;
        let (nu, ng) = potential_with(&q, likelihood, chol, mean);
        u = nu;
        g = ng;
        if !u.is_finite() {
            break;
        }
        if i + 1 < steps {
            p -= &g * step;
        }
    }
    p -= &g * (0.5 * step);
    (q, u, g, p)
}

/// Runs one chain. `stream` selects an independent random stream under
/// `cfg.seed`.
pub fn run_chain<L: Likelihood + ?Sized>(
    likelihood: &L,
    chol: &CholeskyGram,
    mean: f64,
    cfg: &HmcConfig,
    stream: u64,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let n = chol.n();
    if likelihood.n_points() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {n} training inputs",
            likelihood.n_points()
        )));
    }
    let mut rng = rng::substream(cfg.seed, Domain::Hmc, stream, 0);
    let mut eta = DVector::zeros(n);
    let (mut u, mut grad) = potential_with(&eta, likelihood, chol, mean);
    let mut adapt = DualAveraging::new(cfg.initial_step_size, cfg.target_accept);
    let mut step = cfg.initial_step_size;
    let mut draws = DMatrix::zeros(cfg.samples, n);
    let mut accepted = 0usize;
    let mut warmup_accept = 0.0;

    for iter in 0..cfg.warmup + cfg.samples {
        let in_warmup = iter < cfg.warmup;
        let p0 = standard_normal(n, &mut rng);
        let scale = if cfg.step_jitter > 0.0 {
            1.0 + cfg.step_jitter * (2.0 * rng.random::<f64>() - 1.0)
        } else {
            1.0
        };
        let h0 = u + 0.5 * p0.norm_squared();
        let (q, nu, ng, p1) = leapfrog(&eta, &grad, &p0, step * scale, cfg.leapfrog_steps, likelihood, chol, mean);
        let h1 = nu + 0.5 * p1.norm_squared();
        let accept_prob = if h1.is_finite() { (h0 - h1).exp().min(1.0) } else { 0.0 };
        let uniform: f64 = rng.random();
        if uniform < accept_prob {
            eta = q;
            u = nu;
            grad = ng;
            if !in_warmup {
                accepted += 1;
            }
        }
        if in_warmup {
            warmup_accept += accept_prob;
            adapt.update(accept_prob);
            step = if iter + 1 == cfg.warmup {
                adapt.final_step()
            } else {
                adapt.current()
            };
        } else {
            draws.row_mut(iter - cfg.warmup).copy_from(&eta.transpose());
        }
    }

    let accept_rate = accepted as f64 / cfg.samples as f64;
    if accept_rate < MIN_ACCEPT_RATE {
        return Err(Error::Divergent {
            accept_rate,
            step_size: step,
        });
    }
    Ok(ChainOutput {
        eta: draws,
        accept_rate,
        step_size: step,
        warmup_accept_rate: warmup_accept / cfg.warmup as f64,
    })
}

fn assemble(chol: &CholeskyGram, mean: f64, chains: Vec<ChainOutput>) -> LatentPosterior {
    let n = chol.n();
    let total: usize = chains.iter().map(|c| c.eta.nrows()).sum();
    let mut draws = DMatrix::zeros(total, n);
    let mut row = 0;
    for c in &chains {
        // F = 1·mean + H Lᵀ
        let mut f = &c.eta * chol.factor().transpose();
        f.add_scalar_mut(mean);
        draws.rows_mut(row, f.nrows()).copy_from(&f);
        row += f.nrows();
    }
    let rates: Vec<f64> = chains.iter().map(|c| c.accept_rate).collect();
    let accept_rate = chains
        .iter()
        .map(|c| c.accept_rate * c.eta.nrows() as f64)
        .sum::<f64>()
        / total as f64;
    let step_size = chains.iter().map(|c| c.step_size).sum::<f64>() / chains.len() as f64;
    LatentPosterior {
        draws,
        chol: chol.clone(),
        accept_rate,
        step_size,
        backend: BackendTag::Hmc,
        chain_accept_rates: rates,
    }
}

/// Samples the latent vector under the logistic surrogate likelihood.
pub fn sample(y: &[u8], chol: &CholeskyGram, mean: f64, cfg: &HmcConfig) -> Result<LatentPosterior> {
    sample_chains(y, chol, mean, cfg, 1)
}

/// Runs `chains` independent chains in parallel and concatenates their
/// draws in chain order.
pub fn sample_chains(
    y: &[u8],
    chol: &CholeskyGram,
    mean: f64,
    cfg: &HmcConfig,
    chains: usize,
) -> Result<LatentPosterior> {
    let lik = LogisticLikelihood::new(y)?;
    sample_chains_with(&lik, chol, mean, cfg, chains)
}

/// [`sample_chains`] for an arbitrary likelihood.
pub fn sample_chains_with<L: Likelihood + ?Sized>(
    likelihood: &L,
    chol: &CholeskyGram,
    mean: f64,
    cfg: &HmcConfig,
    chains: usize,
) -> Result<LatentPosterior> {
    if chains == 0 {
        return Err(Error::invalid("at least one chain is required"));
    }
    let outputs = (0..chains as u64)
        .into_par_iter()
        .map(|c| run_chain(likelihood, chol, mean, cfg, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(chol, mean, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_moons;
    use crate::gp::{gram, GpConfig};
    use rand::SeedableRng;

    fn toy(n: usize, seed: u64) -> (CholeskyGram, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let y: Vec<u8> = pts.iter().map(|p| (p[0] + 0.3 * p[1] > 0.0) as u8).collect();
        (gram(&pts, &GpConfig::default()).unwrap(), y)
    }

    #[test]
    fn potential_at_origin() {
        let (chol, y) = toy(12, 1);
        let (u, _) = potential(&DVector::zeros(12), &y, &chol, 0.0);
        assert!((u - 12.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (chol, y) = toy(15, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for _ in 0..20 {
            let eta = standard_normal(15, &mut rng);
            let (_, grad) = potential(&eta, &y, &chol, 0.2);
            for k in 0..15 {
                let mut up = eta.clone();
                up[k] += h;
                let mut dn = eta.clone();
                dn[k] -= h;
                let fd = (potential(&up, &y, &chol, 0.2).0 - potential(&dn, &y, &chol, 0.2).0) / (2.0 * h);
                let rel = (fd - grad[k]).abs() / grad[k].abs().max(1.0);
                assert!(rel <= 1e-5, "component {k}: fd {fd} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn gradient_reduces_to_eta_at_likelihood_fixed_point() {
        let (chol, _) = toy(10, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eta = standard_normal(10, &mut rng);
        let f = chol.mul_factor(&eta);
        let lik = LogisticLikelihood::from_targets(f.iter().map(|&v| sigmoid(v)).collect());
        let (_, grad) = potential_with(&eta, &lik, &chol, 0.0);
        assert!((grad - &eta).amax() < 1e-12);
    }

    #[test]
    fn rejects_single_class_and_mismatch() {
        let (chol, _) = toy(6, 6);
        assert!(matches!(sample(&[1; 6], &chol, 0.0, &HmcConfig::default()), Err(Error::SingleClass(1))));
        assert!(sample(&[0, 1, 0], &chol, 0.0, &HmcConfig::default()).is_err());
        let bad = HmcConfig { leapfrog_steps: 0, ..Default::default() };
        assert!(sample(&[0, 1, 0, 1, 0, 1], &chol, 0.0, &bad).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let (chol, y) = toy(20, 7);
        let cfg = HmcConfig { warmup: 100, samples: 50, seed: 11, ..Default::default() };
        let a = sample(&y, &chol, 0.0, &cfg).unwrap();
        let b = sample(&y, &chol, 0.0, &cfg).unwrap();
        assert_eq!(a.draws, b.draws);
        let c = sample(&y, &chol, 0.0, &HmcConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn whitening_round_trip() {
        let (chol, y) = toy(20, 8);
        let cfg = HmcConfig { warmup: 50, samples: 20, seed: 1, ..Default::default() };
        let out = run_chain(&LogisticLikelihood::new(&y).unwrap(), &chol, 0.4, &cfg, 0).unwrap();
        let post = assemble(&chol, 0.4, vec![out.clone()]);
        let back = post.whitened(0.4).transpose();
        assert!((back - out.eta).amax() <= 1e-10);
    }

    #[test]
    fn multiple_chains_concatenate() {
        let (chol, y) = toy(10, 9);
        let cfg = HmcConfig { warmup: 50, samples: 30, seed: 2, ..Default::default() };
        let post = sample_chains(&y, &chol, 0.0, &cfg, 3).unwrap();
        assert_eq!(post.n_draws(), 90);
        assert_eq!(post.chain_accept_rates.len(), 3);
        let single = sample(&y, &chol, 0.0, &cfg).unwrap();
        assert_eq!(post.draws.rows(0, 30), single.draws.rows(0, 30));
    }

    #[test]
    fn energy_is_nearly_conserved_with_small_steps() {
        let d = make_moons(300, 0.3, 1).unwrap();
        let chol = gram(&d.inputs(), &GpConfig::default()).unwrap();
        let lik = LogisticLikelihood::new(&d.labels()).unwrap();
        let cfg = HmcConfig { warmup: 200, samples: 10, seed: 3, ..Default::default() };
        let out = run_chain(&lik, &chol, 0.0, &cfg, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for s in 0..10 {
            let eta = out.eta.row(s).transpose();
            let (u0, g0) = potential_with(&eta, &lik, &chol, 0.0);
            let p0 = standard_normal(chol.n(), &mut rng);
            let (_, u1, _, p1) = leapfrog(&eta, &g0, &p0, out.step_size * 0.01, 3, &lik, &chol, 0.0);
            let dh = (u1 + 0.5 * p1.norm_squared()) - (u0 + 0.5 * p0.norm_squared());
            assert!(dh.abs() <= 1e-3, "ΔH = {dh}");
        }
    }

    #[test]
    fn divergent_sampler_is_reported() {
        let (chol, y) = toy(20, 10);
        // A single warmup step leaves the huge initial step in place.
        let cfg = HmcConfig { warmup: 1, samples: 20, initial_step_size: 50.0, step_jitter: 0.0, leapfrog_steps: 20, seed: 1, ..Default::default() };
        match sample(&y, &chol, 0.0, &cfg) {
            Err(Error::Divergent { accept_rate, .. }) => assert!(accept_rate < MIN_ACCEPT_RATE),
            other => panic!("expected divergence, got {:?}", other.map(|p| p.accept_rate)),
        }
    }
}
