//! Latent-function inference with two backends.
//!
//! * `hmc`: posterior draws under the logistic surrogate (see [`crate::hmc`]).
//! * `analytic`: a single deterministic "draw", the GP-regression posterior
//!   mean of the ±1-coded labels with observation noise `τ²`.
//!
//! Both produce a [`LatentPosterior`]; downstream code never branches on the
//! backend except through the number of draws.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::{self, CholeskyGram, Conditional, GpConfig};
use crate::hmc::{self, BackendTag, HmcConfig, LatentPosterior};
use crate::rng::{self, Domain};

/// Test points per jointly sampled block in [`latent_at`].
pub const CONDITIONAL_BLOCK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LatentBackend {
    Hmc {
        #[serde(default)]
        config: HmcConfig,
        #[serde(default = "one")]
        chains: usize,
    },
    Analytic {
        #[serde(default = "one_f64")]
        surrogate_noise: f64,
    },
}

fn one() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

impl LatentBackend {
    pub fn hmc(config: HmcConfig) -> Self {
        LatentBackend::Hmc { config, chains: 1 }
    }

    pub fn analytic(surrogate_noise: f64) -> Self {
        LatentBackend::Analytic { surrogate_noise }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LatentBackend::Hmc { config, chains } => {
                if *chains == 0 {
                    return Err(Error::invalid("chains must be at least 1"));
                }
                config.validate()
            }
            LatentBackend::Analytic { surrogate_noise } => {
                if *surrogate_noise > 0.0 && surrogate_noise.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "surrogate noise must be positive, got {surrogate_noise}"
                    )))
                }
            }
        }
    }
}

/// `mean + K (K + τ² I)⁻¹ (z − mean)` with `z = 2y − 1`.
pub fn analytic_mean<P: AsRef<[f64]>>(
    inputs: &[P],
    labels: &[u8],
    gp_cfg: &GpConfig,
    surrogate_noise: f64,
) -> Result<DVector<f64>> {
    let k = gp::kernel_matrix(inputs, gp_cfg);
    let mut noisy = k.clone();
    for i in 0..noisy.nrows() {
        noisy[(i, i)] += surrogate_noise;
    }
    let (l, _) = gp::cholesky_with_jitter(&noisy, 0.0)?;
    let z = DVector::from_iterator(labels.len(), labels.iter().map(|&y| 2.0 * y as f64 - 1.0 - gp_cfg.mean));
    let mut w = l.solve_lower_triangular(&z).expect("positive diagonal");
    l.tr_solve_lower_triangular_mut(&mut w);
    Ok((k * w).add_scalar(gp_cfg.mean))
}

/// Fits the latent posterior at the training inputs.
pub fn fit(train: &Dataset, gp_cfg: &GpConfig, backend: &LatentBackend) -> Result<LatentPosterior> {
    backend.validate()?;
    train.require_both_classes()?;
    let inputs = train.inputs();
    let labels = train.labels();
    let chol = gp::gram(&inputs, gp_cfg)?;
    match backend {
        LatentBackend::Hmc { config, chains } => {
            hmc::sample_chains(&labels, &chol, gp_cfg.mean, config, *chains)
        }
        LatentBackend::Analytic { surrogate_noise } => {
            let f = analytic_mean(&inputs, &labels, gp_cfg, *surrogate_noise)?;
            Ok(LatentPosterior {
                draws: DMatrix::from_row_slice(1, f.len(), f.as_slice()),
                chol,
                accept_rate: 1.0,
                step_size: 0.0,
                backend: BackendTag::Analytic,
                chain_accept_rates: Vec::new(),
            })
        }
    }
}

/// Conditional sampler for latent values at test points, shared by all
/// blocks of one prediction.
pub(crate) struct LatentPredictor<'a> {
    posterior: &'a LatentPosterior,
    gp_cfg: GpConfig,
    whitened: DMatrix<f64>,
    /// `L⁻ᵀ U`, kept for a single draw where no covariance is needed and
    /// the means reduce to `mean + K(X, X*)ᵀ L⁻ᵀ U`.
    dual: Option<DMatrix<f64>>,
    seed: u64,
}

impl<'a> LatentPredictor<'a> {
    pub(crate) fn new(posterior: &'a LatentPosterior, gp_cfg: &GpConfig, seed: u64) -> Result<Self> {
        gp_cfg.validate()?;
        if posterior.n_train() != posterior.chol.n() {
            return Err(Error::DimensionMismatch(format!(
                "posterior has {} latent columns but its Gram matrix has {} inputs",
                posterior.n_train(),
                posterior.chol.n()
            )));
        }
        let whitened = posterior.whitened(gp_cfg.mean);
        let dual = (posterior.n_draws() <= 1).then(|| {
            let mut d = whitened.clone();
            posterior.chol.solve_upper_mut(&mut d);
            d
        });
        Ok(LatentPredictor {
            posterior,
            gp_cfg: *gp_cfg,
            whitened,
            dual,
            seed,
        })
    }

    pub(crate) fn chol(&self) -> &CholeskyGram {
        &self.posterior.chol
    }

    /// Latent values for the test block starting at global index `offset`,
    /// `S × block.len()`. With more than one draw, each row is a joint
    /// sample from the GP conditional given that draw.
    pub(crate) fn block<Q: AsRef<[f64]>>(&self, block: &[Q], offset: usize) -> Result<DMatrix<f64>> {
        if let Some(dual) = &self.dual {
            gp::check_dims(block, Some(self.chol().dim()))?;
            let k = gp::cross_kernel(block, self.chol().inputs(), &self.gp_cfg);
            let mut out = (k * dual).transpose();
            out.add_scalar_mut(self.gp_cfg.mean);
            return Ok(out);
        }
        let cond = Conditional::new(self.chol(), block, &self.gp_cfg)?;
        let means = cond.means_from_whitened(&self.whitened);
        let s = self.posterior.n_draws();
        let m = block.len();
        if m == 0 {
            return Ok(means.transpose());
        }
        let (lc, _) = gp::cholesky_with_jitter(cond.covariance(), 0.0)?;
        let mut z = DMatrix::zeros(m, s);
        let template = rng::base(self.seed, Domain::LatentConditional);
        for d in 0..s {
            let mut r = rng::reposition(&template, d as u64, offset as u64);
            for i in 0..m {
                z[(i, d)] = StandardNormal.sample(&mut r);
            }
        }
        let mut out = means;
        out.gemm(1.0, &lc, &z, 1.0);
        Ok(out.transpose())
    }
}

/// Latent values at `test_inputs` for every posterior draw (`S × m`).
///
/// Test points are processed in blocks of [`CONDITIONAL_BLOCK`]; within a
/// block each draw gets one joint conditional sample. The analytic backend
/// returns the conditional mean and ignores `seed`.
pub fn latent_at<Q: AsRef<[f64]>>(
    test_inputs: &[Q],
    posterior: &LatentPosterior,
    gp_cfg: &GpConfig,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let predictor = LatentPredictor::new(posterior, gp_cfg, seed)?;
    let s = posterior.n_draws();
    let mut out = DMatrix::zeros(s, test_inputs.len());
    for (b, chunk) in test_inputs.chunks(CONDITIONAL_BLOCK).enumerate() {
        let offset = b * CONDITIONAL_BLOCK;
        let block = predictor.block(chunk, offset)?;
        out.columns_mut(offset, chunk.len()).copy_from(&block);
    }
    Ok(out)
}
