//! Binary classification with a Gaussian-process latent function and a
//! Dirichlet-process link.
//!
//! A latent function `f` gets a GP prior and is sampled by Hamiltonian Monte
//! Carlo under a logistic surrogate likelihood (or approximated in closed
//! form by the analytic backend). The link `G` that maps latent values to
//! probabilities is a random CDF with a DP prior centred on a logistic base
//! measure; its posterior at any threshold is a Beta distribution. Predictive
//! probabilities are `G(f*)` averaged over latent draws and link samples.
//!
//! ```no_run
//! use dpgp::{dataset, latent, predict, gp::GpConfig, dp_link::DpLinkConfig};
//!
//! let data = dataset::make_moons(200, 0.2, 0).unwrap();
//! let split = dataset::split(&data, 0.7, 1).unwrap();
//! let gp = GpConfig::default();
//! let post = latent::fit(&split.train, &gp, &latent::LatentBackend::analytic(1.0)).unwrap();
//! let summary = predict::predict(
//!     &split.test.inputs(), &post, &gp, &DpLinkConfig::default(), &Default::default(),
//! ).unwrap();
//! println!("{:?}", &summary.p_mean[..5]);
//! ```

pub mod baseline;
pub mod cli;
pub mod dataset;
pub mod dp_link;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod hmc;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod predict;
pub mod rng;
mod variate;

pub use error::{Error, Result};
