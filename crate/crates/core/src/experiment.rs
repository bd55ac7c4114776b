//! End-to-end experiment description and runner.
//!
//! An [`ExperimentConfig`] is one JSON document describing the data, the
//! latent backend, the link, the baseline and the grid. [`run_experiment`]
//! executes generate → split → fit → predict → evaluate → grid and writes
//! every intermediate file, using the same stage functions as the CLI
//! subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{self, LogRegModel, LogRegOptions};
use crate::dataset::{self, Dataset, DatasetKind, SplitDataset};
use crate::dp_link::DpLinkConfig;
use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::hmc::LatentPosterior;
use crate::io::{self, MetricsFile, ModelMetrics, FORMAT_VERSION};
use crate::latent::{self, LatentBackend};
use crate::metrics::{self, MetricsReport};
use crate::predict::{self, Bounds, GridResult, PredictOptions, PredictiveSummary};

pub const OUT_DIR_ENV: &str = "DPGP_OUT_DIR";

pub const DPGP_LABEL: &str = "DP+GP";
pub const LOGREG_LABEL: &str = "Logistic Regression";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
    #[serde(default = "default_factor")]
    pub inner_radius_factor: f64,
}

fn default_factor() -> f64 {
    dataset::DEFAULT_INNER_RADIUS_FACTOR
}

impl DatasetSpec {
    pub fn generate(&self) -> Result<Dataset> {
        match self.kind {
            DatasetKind::Moons => dataset::make_moons(self.n, self.noise, self.seed),
            DatasetKind::Circles => dataset::make_circles(self.n, self.noise, self.inner_radius_factor, self.seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub enabled: bool,
    pub resolution: usize,
    /// Explicit `[x1_min, x1_max, x2_min, x2_max]`; defaults to the padded
    /// bounding box of the full dataset.
    pub bounds: Option<Bounds>,
    pub padding: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            enabled: true,
            resolution: predict::DEFAULT_GRID_RESOLUTION,
            bounds: None,
            padding: predict::DEFAULT_GRID_PADDING,
        }
    }
}

impl GridSpec {
    pub fn resolve_bounds(&self, data: &Dataset) -> Result<Bounds> {
        match self.bounds {
            Some(b) => Ok(b),
            None => predict::padded_bounds(data, self.padding),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub name: String,
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    #[serde(default)]
    pub gp: GpConfig,
    pub backend: LatentBackend,
    #[serde(default)]
    pub dp: DpLinkConfig,
    #[serde(default)]
    pub predict: PredictOptions,
    #[serde(default)]
    pub logreg: LogRegOptions,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: ExperimentConfig = io::read_json(path, "experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gp.validate()?;
        self.backend.validate()?;
        self.dp.validate()?;
        self.predict.validate()?;
        if self.grid.enabled && self.grid.resolution < 2 {
            return Err(Error::invalid("grid resolution must be at least 2"));
        }
        Ok(())
    }

    /// Output directory: explicit override, then the config, then
    /// `$DPGP_OUT_DIR/<name>`, then `out/<name>`.
    pub fn resolve_output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        if let Some(d) = override_dir {
            return d.to_path_buf();
        }
        if let Some(d) = &self.output_dir {
            return d.clone();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(root) => PathBuf::from(root).join(&self.name),
            None => PathBuf::from("out").join(&self.name),
        }
    }
}

/// File names written by [`run_experiment`] inside the output directory.
pub mod files {
    pub const CONFIG: &str = "config.json";
    pub const DATASET: &str = "dataset.csv";
    pub const TRAIN: &str = "train.csv";
    pub const TEST: &str = "test.csv";
    pub const POSTERIOR: &str = "posterior.json";
    pub const LOGREG: &str = "logreg.json";
    pub const PREDICTIONS_DPGP: &str = "predictions_dpgp.csv";
    pub const PREDICTIONS_LOGREG: &str = "predictions_logreg.csv";
    pub const METRICS: &str = "metrics.json";
    pub const GRID: &str = "grid.csv";
}

pub fn stage_split(data: &Dataset, spec: &SplitSpec) -> Result<SplitDataset> {
    dataset::split(data, spec.train_fraction, spec.seed).map_err(|e| e.in_stage("split"))
}

pub fn stage_fit(train: &Dataset, gp: &GpConfig, backend: &LatentBackend) -> Result<LatentPosterior> {
    latent::fit(train, gp, backend).map_err(|e| e.in_stage("fit"))
}

pub fn stage_fit_logreg(train: &Dataset, opts: &LogRegOptions) -> Result<LogRegModel> {
    baseline::fit_logreg(train, opts).map_err(|e| e.in_stage("fit-logreg"))
}

pub fn stage_predict(
    test: &Dataset,
    posterior: &LatentPosterior,
    gp: &GpConfig,
    dp: &DpLinkConfig,
    opts: &PredictOptions,
) -> Result<PredictiveSummary> {
    predict::predict(&test.inputs(), posterior, gp, dp, opts).map_err(|e| e.in_stage("predict"))
}

/// Baseline predictions as a summary with degenerate bounds.
pub fn stage_predict_logreg(test: &Dataset, model: &LogRegModel, level: f64) -> PredictiveSummary {
    let p = baseline::predict_logreg(model, &test.inputs());
    PredictiveSummary {
        p_lo: p.clone(),
        p_hi: p.clone(),
        p_mean: p,
        level,
        per_draw: None,
    }
}

pub fn stage_evaluate(p_mean: &[f64], test: &Dataset) -> Result<MetricsReport> {
    metrics::evaluate(p_mean, &test.labels()).map_err(|e| e.in_stage("evaluate"))
}

pub fn stage_grid(
    bounds: Bounds,
    resolution: usize,
    posterior: &LatentPosterior,
    gp: &GpConfig,
    dp: &DpLinkConfig,
    opts: &PredictOptions,
) -> Result<GridResult> {
    predict::grid(bounds, resolution, posterior, gp, dp, opts).map_err(|e| e.in_stage("grid"))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dpgp: MetricsReport,
    pub logreg: MetricsReport,
    pub accept_rate: f64,
    pub output_dir: PathBuf,
}

/// In-memory results of a run, without touching the filesystem.
#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub data: Dataset,
    pub split: SplitDataset,
    pub posterior: LatentPosterior,
    pub logreg_model: LogRegModel,
    pub dpgp_predictions: PredictiveSummary,
    pub logreg_predictions: PredictiveSummary,
    pub dpgp: MetricsReport,
    pub logreg: MetricsReport,
    pub grid: Option<GridResult>,
}

/// Runs every stage in memory.
pub fn compute(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let data = cfg.dataset.generate().map_err(|e| e.in_stage("generate"))?;
    let split = stage_split(&data, &cfg.split)?;
    let posterior = stage_fit(&split.train, &cfg.gp, &cfg.backend)?;
    let logreg_model = stage_fit_logreg(&split.train, &cfg.logreg)?;
    let dpgp_predictions = stage_predict(&split.test, &posterior, &cfg.gp, &cfg.dp, &cfg.predict)?;
    let logreg_predictions = stage_predict_logreg(&split.test, &logreg_model, cfg.predict.level);
    let dpgp = stage_evaluate(&dpgp_predictions.p_mean, &split.test)?;
    let logreg = stage_evaluate(&logreg_predictions.p_mean, &split.test)?;
    let grid = if cfg.grid.enabled {
        let bounds = cfg.grid.resolve_bounds(&data).map_err(|e| e.in_stage("grid"))?;
        Some(stage_grid(bounds, cfg.grid.resolution, &posterior, &cfg.gp, &cfg.dp, &cfg.predict)?)
    } else {
        None
    };
    Ok(ExperimentResults {
        data,
        split,
        posterior,
        logreg_model,
        dpgp_predictions,
        logreg_predictions,
        dpgp,
        logreg,
        grid,
    })
}

pub fn metrics_file(name: &str, entries: &[(&str, MetricsReport)]) -> MetricsFile {
    MetricsFile {
        format_version: FORMAT_VERSION,
        experiment: name.to_string(),
        models: entries
            .iter()
            .map(|(m, r)| ModelMetrics {
                model: m.to_string(),
                metrics: *r,
            })
            .collect(),
    }
}

/// Runs the experiment and writes all artifacts to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    let r = compute(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = |f: &str| out_dir.join(f);
    io::write_json(cfg, path(files::CONFIG))?;
    dataset::write_csv(&r.data, path(files::DATASET))?;
    dataset::write_csv(&r.split.train, path(files::TRAIN))?;
    dataset::write_csv(&r.split.test, path(files::TEST))?;
    io::write_posterior(&r.posterior, &cfg.gp, &cfg.backend, path(files::POSTERIOR))?;
    io::write_logreg(&r.logreg_model, path(files::LOGREG))?;
    io::write_predictions(&r.dpgp_predictions, path(files::PREDICTIONS_DPGP))?;
    io::write_predictions(&r.logreg_predictions, path(files::PREDICTIONS_LOGREG))?;
    io::write_json(
        &metrics_file(&cfg.name, &[(DPGP_LABEL, r.dpgp), (LOGREG_LABEL, r.logreg)]),
        path(files::METRICS),
    )?;
    if let Some(g) = &r.grid {
        io::write_grid(g, path(files::GRID))?;
    }
    Ok(ExperimentOutcome {
        dpgp: r.dpgp,
        logreg: r.logreg,
        accept_rate: r.posterior.accept_rate,
        output_dir: out_dir.to_path_buf(),
    })
}

/// Two-row comparison table.
pub fn format_table(title: &str, rows: &[(&str, MetricsReport)]) -> String {
    let mut s = format!("{title}\n{:<22}{:>8}{:>14}{:>10}\n", "Model", "AUC", "Brier Score", "LogLoss");
    for (name, m) in rows {
        s.push_str(&format!("{:<22}{:>8.4}{:>14.3}{:>10.3}\n", name, m.auc, m.brier, m.logloss));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmc::HmcConfig;

    pub(crate) fn small_config(backend: LatentBackend) -> ExperimentConfig {
        ExperimentConfig {
            format_version: FORMAT_VERSION,
            name: "toy".into(),
            dataset: DatasetSpec {
                kind: DatasetKind::Moons,
                n: 40,
                noise: 0.2,
                seed: 1,
                inner_radius_factor: 0.5,
            },
            split: SplitSpec { train_fraction: 0.5, seed: 2 },
            gp: GpConfig::default(),
            backend,
            dp: DpLinkConfig::default(),
            predict: PredictOptions { seed: 3, ..Default::default() },
            logreg: LogRegOptions::default(),
            grid: GridSpec { resolution: 5, ..Default::default() },
            output_dir: None,
        }
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = small_config(LatentBackend::hmc(HmcConfig { warmup: 10, samples: 5, ..Default::default() }));
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let text = r#"{
            "format_version": 1, "name": "c",
            "dataset": {"kind": "circles", "n": 100, "noise": 0.1, "seed": 7},
            "split": {"train_fraction": 0.7, "seed": 1},
            "backend": {"kind": "analytic"}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.backend, LatentBackend::analytic(1.0));
        assert_eq!(cfg.gp, GpConfig::default());
        assert_eq!(cfg.grid.resolution, 200);
        assert_eq!(cfg.dataset.inner_radius_factor, 0.5);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{
            "format_version": 1, "name": "c",
            "dataset": {"kind": "circles", "n": 100, "noise": 0.1, "seed": 7, "bogus": 1},
            "split": {"train_fraction": 0.7, "seed": 1},
            "backend": {"kind": "analytic"}
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let mut cfg = small_config(LatentBackend::analytic(1.0));
        cfg.dataset.n = 3;
        let e = compute(&cfg).unwrap_err();
        assert!(e.to_string().starts_with("generate:"), "{e}");
    }

    #[test]
    fn compute_is_deterministic() {
        let cfg = small_config(LatentBackend::hmc(HmcConfig { warmup: 50, samples: 20, seed: 4, ..Default::default() }));
        let a = compute(&cfg).unwrap();
        let b = compute(&cfg).unwrap();
        assert_eq!(a.dpgp_predictions, b.dpgp_predictions);
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.grid.as_ref().unwrap().p_mean.len(), 25);
    }

    #[test]
    fn table_layout() {
        let m = MetricsReport { auc: 0.9997, brier: 0.103, logloss: 0.358, n_test: 300 };
        let t = format_table("circles", &[(DPGP_LABEL, m)]);
        assert!(t.contains("DP+GP"));
        assert!(t.contains("0.9997"));
        assert!(t.contains("0.103"));
    }
}
