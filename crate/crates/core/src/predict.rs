//! Posterior predictive probabilities.
//!
//! For every latent draw `s` the training latents become the anchors of a
//! [`LinkPosterior`]; the latent values at the test points are drawn from
//! the GP conditional and pushed through the link: one Beta variate of
//! `G(f*)` per draw and test point (or the Ferguson mean in
//! [`LinkMode::Mean`]). Means and credible quantiles are taken over draws.
//!
//! With a single latent draw (the analytic backend) the bounds are exact
//! quantiles of the Beta marginal and the mean is the Beta mean.
//!
//! Link variates for draw `s` and test point `j` come from sub-stream
//! `(s, j)` of the [`Domain::LinkSample`] generator, so results do not
//! depend on how test points are grouped or scheduled.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::dataset::Dataset;
use crate::dp_link::{DpLinkConfig, LinkPosterior};
use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::hmc::LatentPosterior;
use crate::latent::{LatentPredictor, CONDITIONAL_BLOCK};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    /// One Beta variate of the link per draw and test point.
    #[default]
    Sample,
    /// Plug in the posterior mean of the link.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictOptions {
    /// Central credible level in `(0, 1)`.
    pub level: f64,
    pub seed: u64,
    pub link_mode: LinkMode,
    /// Keep the `S × m` matrix of per-draw probabilities.
    #[serde(skip)]
    pub keep_draws: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            level: 0.95,
            seed: 0,
            link_mode: LinkMode::Sample,
            keep_draws: false,
        }
    }
}

impl PredictOptions {
    pub fn validate(&self) -> Result<()> {
        if self.level > 0.0 && self.level < 1.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("credible level must lie in (0, 1), got {}", self.level)))
        }
    }

    fn tail_probs(&self) -> (f64, f64) {
        let tail = (1.0 - self.level) / 2.0;
        (tail, 1.0 - tail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub p_mean: Vec<f64>,
    pub p_lo: Vec<f64>,
    pub p_hi: Vec<f64>,
    pub level: f64,
    pub per_draw: Option<DMatrix<f64>>,
}

impl PredictiveSummary {
    pub fn len(&self) -> usize {
        self.p_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_mean.is_empty()
    }
}

/// Type-7 empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of `Beta(a, b)`.
pub fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    inv_beta_reg(a, b, p).clamp(0.0, 1.0)
}

struct BlockSummary {
    mean: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    draws: Option<DMatrix<f64>>,
}

struct Pipeline<'a> {
    latent: LatentPredictor<'a>,
    links: Vec<LinkPosterior>,
    opts: PredictOptions,
    link_rng: rand_chacha::ChaCha8Rng,
}

impl<'a> Pipeline<'a> {
    fn new(posterior: &'a LatentPosterior, gp_cfg: &GpConfig, dp_cfg: &DpLinkConfig, opts: &PredictOptions) -> Result<Self> {
        opts.validate()?;
        dp_cfg.validate()?;
        let latent = LatentPredictor::new(posterior, gp_cfg, opts.seed)?;
        let links = (0..posterior.n_draws())
            .map(|s| LinkPosterior::new(*dp_cfg, posterior.draw(s)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Pipeline {
            latent,
            links,
            opts: *opts,
            link_rng: rng::base(opts.seed, Domain::LinkSample),
        })
    }

    fn block<Q: AsRef<[f64]> + Sync>(&self, chunk: &[Q], offset: usize) -> Result<BlockSummary> {
        let f = self.latent.block(chunk, offset)?;
        let s_count = f.nrows();
        let m = chunk.len();
        let (q_lo, q_hi) = self.opts.tail_probs();
        let mut out = BlockSummary {
            mean: Vec::with_capacity(m),
            lo: Vec::with_capacity(m),
            hi: Vec::with_capacity(m),
            draws: self.opts.keep_draws.then(|| DMatrix::zeros(s_count, m)),
        };
        if s_count == 1 {
            let link = &self.links[0];
            for j in 0..m {
                let (a, b) = link.beta_params(f[(0, j)]);
                let mean = a / (a + b);
                out.mean.push(mean);
                out.lo.push(beta_quantile(a, b, q_lo));
                out.hi.push(beta_quantile(a, b, q_hi));
                if let Some(d) = out.draws.as_mut() {
                    d[(0, j)] = mean;
                }
            }
            return Ok(out);
        }
        let mut vals = vec![0.0; s_count];
        for j in 0..m {
            let global = (offset + j) as u64;
            for (s, v) in vals.iter_mut().enumerate() {
                let t = f[(s, j)];
                *v = match self.opts.link_mode {
                    LinkMode::Sample => {
                        let mut r = rng::reposition(&self.link_rng, s as u64, global);
                        self.links[s].sample_g(t, &mut r)
                    }
                    LinkMode::Mean => self.links[s].ferguson_mean(t),
                };
            }
            if let Some(d) = out.draws.as_mut() {
                d.column_mut(j).copy_from_slice(&vals);
            }
            let mut total = 0.0;
            for v in &vals {
                total += v;
            }
            out.mean.push(total / s_count as f64);
            vals.sort_unstable_by(f64::total_cmp);
            out.lo.push(quantile_sorted(&vals, q_lo));
            out.hi.push(quantile_sorted(&vals, q_hi));
        }
        Ok(out)
    }

    fn run<Q: AsRef<[f64]> + Sync>(&self, test_inputs: &[Q]) -> Result<PredictiveSummary> {
        let blocks = test_inputs
            .par_chunks(CONDITIONAL_BLOCK)
            .enumerate()
            .map(|(b, chunk)| self.block(chunk, b * CONDITIONAL_BLOCK))
            .collect::<Result<Vec<_>>>()?;
        let m = test_inputs.len();
        let s_count = self.links.len();
        let mut summary = PredictiveSummary {
            p_mean: Vec::with_capacity(m),
            p_lo: Vec::with_capacity(m),
            p_hi: Vec::with_capacity(m),
            level: self.opts.level,
            per_draw: self.opts.keep_draws.then(|| DMatrix::zeros(s_count, m)),
        };
        let mut col = 0;
        for b in blocks {
            if let (Some(all), Some(d)) = (summary.per_draw.as_mut(), b.draws.as_ref()) {
                all.columns_mut(col, d.ncols()).copy_from(d);
            }
            col += b.mean.len();
            summary.p_mean.extend(b.mean);
            summary.p_lo.extend(b.lo);
            summary.p_hi.extend(b.hi);
        }
        Ok(summary)
    }
}

/// Posterior predictive summary at `test_inputs`.
pub fn predict<Q: AsRef<[f64]> + Sync>(
    test_inputs: &[Q],
    posterior: &LatentPosterior,
    gp_cfg: &GpConfig,
    dp_cfg: &DpLinkConfig,
    opts: &PredictOptions,
) -> Result<PredictiveSummary> {
    Pipeline::new(posterior, gp_cfg, dp_cfg, opts)?.run(test_inputs)
}

/// `(x1_min, x1_max, x2_min, x2_max)`.
pub type Bounds = [f64; 4];

pub const DEFAULT_GRID_PADDING: f64 = 0.5;
pub const DEFAULT_GRID_RESOLUTION: usize = 200;

/// Bounding box of the data padded by `padding` on every side.
pub fn padded_bounds(d: &Dataset, padding: f64) -> Result<Bounds> {
    let (a, b, c, e) = d
        .bounds()
        .ok_or_else(|| Error::EmptyData("cannot derive grid bounds from an empty dataset".into()))?;
    Ok([a - padding, b + padding, c - padding, e + padding])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub grid_x1: Vec<f64>,
    pub grid_x2: Vec<f64>,
    /// Row-major, `|grid_x2|` rows of `|grid_x1|` values.
    pub p_mean: Vec<f64>,
    pub p_lo: Vec<f64>,
    pub p_hi: Vec<f64>,
    pub level: f64,
}

impl GridResult {
    pub fn shape(&self) -> (usize, usize) {
        (self.grid_x2.len(), self.grid_x1.len())
    }

    /// Value of a row-major field at `(row, col)`.
    pub fn at(field: &[f64], shape: (usize, usize), row: usize, col: usize) -> f64 {
        field[row * shape.1 + col]
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect()
}

/// Evaluates the predictive summary on a `resolution × resolution` mesh.
pub fn grid(
    bounds: Bounds,
    resolution: usize,
    posterior: &LatentPosterior,
    gp_cfg: &GpConfig,
    dp_cfg: &DpLinkConfig,
    opts: &PredictOptions,
) -> Result<GridResult> {
    if resolution < 2 {
        return Err(Error::invalid(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let [x1a, x1b, x2a, x2b] = bounds;
    if !(bounds.iter().all(|v| v.is_finite()) && x1a < x1b && x2a < x2b) {
        return Err(Error::invalid(format!("grid bounds must be finite and ordered, got {bounds:?}")));
    }
    let grid_x1 = axis(x1a, x1b, resolution);
    let grid_x2 = axis(x2a, x2b, resolution);
    let points: Vec<[f64; 2]> = grid_x2
        .iter()
        .flat_map(|&b| grid_x1.iter().map(move |&a| [a, b]))
        .collect();
    let opts = PredictOptions { keep_draws: false, ..*opts };
    let s = predict(&points, posterior, gp_cfg, dp_cfg, &opts)?;
    Ok(GridResult {
        grid_x1,
        grid_x2,
        p_mean: s.p_mean,
        p_lo: s.p_lo,
        p_hi: s.p_hi,
        level: s.level,
    })
}
