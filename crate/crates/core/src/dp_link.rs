//! Dirichlet-process posterior for the random link function.
//!
//! A [`LinkPosterior`] treats the latent training values of one posterior
//! draw as a pseudo-sample from the unknown link CDF `G ~ DP(α, G₀)`, with a
//! logistic base measure normalized to total mass one. Its point estimate is
//!
//! ```text
//! Ĝ(t) = (α G₀(t) + m(t)) / (α + n) = γ G₀(t) + (1 − γ) m(t)/n,   γ = α / (α + n)
//! ```
//!
//! where `m(t)` counts anchors `≤ t` (ties included), and the marginal of
//! `G(t)` is `Beta(α G₀(t) + m, α (1 − G₀(t)) + n − m)`.
//!
//! The constructor takes latent values only. Class labels never enter this
//! module: given the latent draw, the link posterior does not depend on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::variate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpLinkConfig {
    /// Concentration α.
    pub alpha: f64,
    /// Location of the logistic base CDF.
    #[serde(default)]
    pub base_loc: f64,
    /// Scale of the logistic base CDF.
    #[serde(default = "unit")]
    pub base_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for DpLinkConfig {
    fn default() -> Self {
        DpLinkConfig {
            alpha: 1.0,
            base_loc: 0.0,
            base_scale: 1.0,
        }
    }
}

impl DpLinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha.is_finite() && self.base_scale > 0.0 && self.base_scale.is_finite() && self.base_loc.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "DP link needs alpha > 0 and base scale > 0, got {self:?}"
            )))
        }
    }
}

/// Logistic base CDF `G₀(t) = 1 / (1 + exp(−(t − loc)/scale))`.
pub fn base_cdf(t: f64, config: &DpLinkConfig) -> f64 {
    let z = (t - config.base_loc) / config.base_scale;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `1 − G₀(t)` without cancellation.
fn base_survival(t: f64, config: &DpLinkConfig) -> f64 {
    let flipped = DpLinkConfig {
        base_loc: -config.base_loc,
        ..*config
    };
    base_cdf(-t, &flipped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkPosterior {
    config: DpLinkConfig,
    anchors: Vec<f64>,
}

impl LinkPosterior {
    /// Builds the posterior from the latent values of one draw.
    pub fn new(config: DpLinkConfig, anchors: impl Into<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let mut anchors = anchors.into();
        if let Some(i) = anchors.iter().position(|a| !a.is_finite()) {
            return Err(Error::invalid(format!("anchor {i} is not finite")));
        }
        anchors.sort_unstable_by(f64::total_cmp);
        Ok(LinkPosterior { config, anchors })
    }

    pub fn config(&self) -> &DpLinkConfig {
        &self.config
    }

    /// Sorted anchors.
    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    pub fn n(&self) -> usize {
        self.anchors.len()
    }

    /// Prior weight `γ = α / (α + n)`.
    pub fn prior_weight(&self) -> f64 {
        self.config.alpha / (self.config.alpha + self.n() as f64)
    }

    /// Number of anchors `≤ t`.
    pub fn count_leq(&self, t: f64) -> usize {
        self.anchors.partition_point(|&a| a <= t)
    }

    /// Posterior mean of `G(t)`.
    pub fn ferguson_mean(&self, t: f64) -> f64 {
        let m = self.count_leq(t) as f64;
        let alpha = self.config.alpha;
        (alpha * base_cdf(t, &self.config) + m) / (alpha + self.n() as f64)
    }

    /// Empirical CDF of the anchors at `t`; zero with no anchors.
    pub fn empirical_cdf(&self, t: f64) -> f64 {
        if self.anchors.is_empty() {
            0.0
        } else {
            self.count_leq(t) as f64 / self.n() as f64
        }
    }

    /// Beta parameters of the posterior marginal of `G(t)`.
    pub fn beta_params(&self, t: f64) -> (f64, f64) {
        let m = self.count_leq(t) as f64;
        let alpha = self.config.alpha;
        let a = alpha * base_cdf(t, &self.config) + m;
        let b = alpha * base_survival(t, &self.config) + (self.n() as f64 - m);
        (a, b)
    }

    /// One draw of `G(t)` from its Beta marginal.
    pub fn sample_g<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let (a, b) = self.beta_params(t);
        variate::beta_variate(a, b, rng)
    }
}
