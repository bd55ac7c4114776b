//! Command-line interface.
//!
//! Every pipeline stage is a subcommand that reads and writes the versioned
//! files of [`crate::io`]. `run-experiment` executes all of them from one
//! JSON config. Flags override individual config fields.
//!
//! Exit codes: 0 success, 1 invalid input or numerical failure, 2 usage
//! error, 3 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baseline::LogRegOptions;
use crate::dataset::{self, DatasetKind, DEFAULT_INNER_RADIUS_FACTOR};
use crate::dp_link::DpLinkConfig;
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig, SplitSpec, DPGP_LABEL, LOGREG_LABEL};
use crate::gp::GpConfig;
use crate::hmc::HmcConfig;
use crate::io;
use crate::latent::LatentBackend;
use crate::predict::{Bounds, LinkMode, PredictOptions};

pub const EXIT_INVALID: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dpgp", version, about = "GP latent function with a Dirichlet-process link for binary classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-class dataset as CSV.
    Generate(GenerateArgs),
    /// Shuffle a dataset and split it into train and test files.
    Split(SplitArgs),
    /// Fit the DP+GP posterior or the logistic-regression baseline.
    Fit(FitArgs),
    /// Predict probabilities for a test file.
    Predict(PredictArgs),
    /// Compute AUC, Brier score and log loss of a predictions file.
    Evaluate(EvaluateArgs),
    /// Evaluate the predictive probability on a regular grid.
    Grid(GridArgs),
    /// Run every stage from a JSON experiment config.
    RunExperiment(RunArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: DatasetKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inner-to-outer radius ratio for circles.
    #[arg(long, default_value_t = DEFAULT_INNER_RADIUS_FACTOR)]
    pub factor: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Dpgp,
    Logreg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Hmc,
    Analytic,
}

/// GP and latent-backend settings shared by `fit`.
#[derive(Debug, Args, Default)]
pub struct GpFlags {
    #[arg(long)]
    pub signal_variance: Option<f64>,
    #[arg(long)]
    pub lengthscale: Option<f64>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub leapfrog_steps: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub hmc_seed: Option<u64>,
    #[arg(long)]
    pub surrogate_noise: Option<f64>,
}

impl GpFlags {
    fn apply(&self, gp: &mut GpConfig, backend: &mut LatentBackend) {
        set(&mut gp.signal_variance, self.signal_variance);
        set(&mut gp.lengthscale, self.lengthscale);
        set(&mut gp.jitter, self.jitter);
        match self.backend {
            Some(BackendKind::Hmc) if !matches!(backend, LatentBackend::Hmc { .. }) => {
                *backend = LatentBackend::hmc(HmcConfig::default());
            }
            Some(BackendKind::Analytic) if !matches!(backend, LatentBackend::Analytic { .. }) => {
                *backend = LatentBackend::analytic(1.0);
            }
            _ => {}
        }
        match backend {
            LatentBackend::Hmc { config, chains } => {
                set(&mut config.warmup, self.warmup);
                set(&mut config.samples, self.samples);
                set(&mut config.leapfrog_steps, self.leapfrog_steps);
                set(&mut config.seed, self.hmc_seed);
                set(chains, self.chains);
            }
            LatentBackend::Analytic { surrogate_noise } => set(surrogate_noise, self.surrogate_noise),
        }
    }
}

/// Link and prediction settings shared by `predict` and `grid`.
#[derive(Debug, Args, Default)]
pub struct LinkFlags {
    /// DP concentration.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub base_loc: Option<f64>,
    #[arg(long)]
    pub base_scale: Option<f64>,
    /// Central credible level.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub link_mode: Option<LinkMode>,
}

impl LinkFlags {
    fn apply(&self, dp: &mut DpLinkConfig, opts: &mut PredictOptions) {
        set(&mut dp.alpha, self.alpha);
        set(&mut dp.base_loc, self.base_loc);
        set(&mut dp.base_scale, self.base_scale);
        set(&mut opts.level, self.level);
        set(&mut opts.seed, self.seed);
        set(&mut opts.link_mode, self.link_mode);
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, value_enum, default_value = "dpgp")]
    pub model: ModelKind,
    /// Experiment config supplying the `gp`, `backend` and `logreg` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub gp: GpFlags,
    /// Standardize features before fitting the baseline.
    #[arg(long)]
    pub standardize: bool,
    /// Output JSON; for DP+GP the draws go to the same stem with `.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub test: PathBuf,
    /// Training file the posterior was fitted on.
    #[arg(long, required_unless_present = "logreg")]
    pub train: Option<PathBuf>,
    #[arg(long, conflicts_with = "logreg", required_unless_present = "logreg")]
    pub posterior: Option<PathBuf>,
    #[arg(long)]
    pub logreg: Option<PathBuf>,
    /// Experiment config supplying the `dp` and `predict` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub link: LinkFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Model label written to the metrics file.
    #[arg(long, default_value = DPGP_LABEL)]
    pub model: String,
    #[arg(long, default_value = "experiment")]
    pub name: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// `x1_min,x1_max,x2_min,x2_max`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bounds: Option<Vec<f64>>,
    /// Dataset whose padded bounding box is used when `--bounds` is absent;
    /// defaults to the training file.
    #[arg(long)]
    pub bounds_from: Option<PathBuf>,
    /// Experiment config supplying the `dp`, `predict` and `grid` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub link: LinkFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` and `$DPGP_OUT_DIR`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub grid_resolution: Option<usize>,
    #[arg(long)]
    pub no_grid: bool,
    #[command(flatten)]
    pub gp: GpFlags,
    #[command(flatten)]
    pub link: LinkFlags,
}

/// Parses the process arguments, runs the command and maps the outcome to
/// an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_INVALID })
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Split(a) => split(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Grid(a) => grid(a),
        Command::RunExperiment(a) => run_experiment(a),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Option<ExperimentConfig>> {
    path.as_ref().map(ExperimentConfig::load).transpose()
}

fn generate(a: GenerateArgs) -> Result<()> {
    let d = match a.kind {
        DatasetKind::Moons => dataset::make_moons(a.n, a.noise, a.seed),
        DatasetKind::Circles => dataset::make_circles(a.n, a.noise, a.factor, a.seed),
    }
    .map_err(|e| e.in_stage("generate"))?;
    dataset::write_csv(&d, &a.out)
}

fn split(a: SplitArgs) -> Result<()> {
    let d = dataset::read_csv(&a.data)?;
    let s = experiment::stage_split(
        &d,
        &SplitSpec {
            train_fraction: a.train_fraction,
            seed: a.seed,
        },
    )?;
    dataset::write_csv(&s.train, &a.train_out)?;
    dataset::write_csv(&s.test, &a.test_out)
}

fn fit(a: FitArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let train = dataset::read_csv(&a.train)?;
    match a.model {
        ModelKind::Dpgp => {
            let mut gp = cfg.as_ref().map(|c| c.gp).unwrap_or_default();
            let mut backend = cfg
                .as_ref()
                .map(|c| c.backend)
                .unwrap_or_else(|| LatentBackend::hmc(HmcConfig::default()));
            a.gp.apply(&mut gp, &mut backend);
            let post = experiment::stage_fit(&train, &gp, &backend)?;
            eprintln!(
                "fit: {} draws, acceptance rate {:.3}, step size {:.4}",
                post.n_draws(),
                post.accept_rate,
                post.step_size
            );
            io::write_posterior(&post, &gp, &backend, &a.out)
        }
        ModelKind::Logreg => {
            let mut opts: LogRegOptions = cfg.as_ref().map(|c| c.logreg).unwrap_or_default();
            opts.standardize |= a.standardize;
            let model = experiment::stage_fit_logreg(&train, &opts)?;
            io::write_logreg(&model, &a.out)
        }
    }
}

fn link_settings(cfg: &Option<ExperimentConfig>, flags: &LinkFlags) -> Result<(DpLinkConfig, PredictOptions)> {
    let mut dp = cfg.as_ref().map(|c| c.dp).unwrap_or_default();
    let mut opts = cfg.as_ref().map(|c| c.predict).unwrap_or_default();
    flags.apply(&mut dp, &mut opts);
    dp.validate()?;
    opts.validate()?;
    Ok((dp, opts))
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let (dp, opts) = link_settings(&cfg, &a.link)?;
    let test = dataset::read_csv(&a.test)?;
    let summary = match (&a.posterior, &a.logreg) {
        (Some(p), None) => {
            let train_path = a
                .train
                .as_ref()
                .ok_or_else(|| Error::invalid("--train is required with --posterior"))?;
            let train = dataset::read_csv(train_path)?;
            let (post, meta) = io::read_posterior(p, &train).map_err(|e| e.in_stage("predict"))?;
            experiment::stage_predict(&test, &post, &meta.gp, &dp, &opts)?
        }
        (None, Some(m)) => {
            let model = io::read_logreg(m)?;
            experiment::stage_predict_logreg(&test, &model, opts.level)
        }
        _ => return Err(Error::invalid("exactly one of --posterior and --logreg is required")),
    };
    io::write_predictions(&summary, &a.out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (p_mean, _, _) = io::read_predictions(&a.predictions)?;
    let test = dataset::read_csv(&a.test)?;
    let report = experiment::stage_evaluate(&p_mean, &test)?;
    print!("{}", experiment::format_table(&a.name, &[(&a.model, report)]));
    if let Some(out) = &a.out {
        io::write_json(&experiment::metrics_file(&a.name, &[(&a.model, report)]), out)?;
    }
    Ok(())
}

fn grid(a: GridArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let (dp, opts) = link_settings(&cfg, &a.link)?;
    let spec = cfg.as_ref().map(|c| c.grid).unwrap_or_default();
    let resolution = a.resolution.unwrap_or(spec.resolution);
    let train = dataset::read_csv(&a.train)?;
    let bounds: Bounds = match &a.bounds {
        Some(b) if b.len() == 4 => [b[0], b[1], b[2], b[3]],
        Some(b) => return Err(Error::invalid(format!("--bounds needs 4 values, got {}", b.len()))),
        None => match &a.bounds_from {
            Some(p) => spec.resolve_bounds(&dataset::read_csv(p)?)?,
            None => spec.resolve_bounds(&train)?,
        },
    };
    let (post, meta) = io::read_posterior(&a.posterior, &train).map_err(|e| e.in_stage("grid"))?;
    let g = experiment::stage_grid(bounds, resolution, &post, &meta.gp, &dp, &opts)?;
    io::write_grid(&g, &a.out)
}

fn run_experiment(a: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    set(&mut cfg.dataset.seed, a.data_seed);
    set(&mut cfg.split.seed, a.split_seed);
    set(&mut cfg.grid.resolution, a.grid_resolution);
    if a.no_grid {
        cfg.grid.enabled = false;
    }
    a.gp.apply(&mut cfg.gp, &mut cfg.backend);
    a.link.apply(&mut cfg.dp, &mut cfg.predict);
    let out_dir = cfg.resolve_output_dir(a.out_dir.as_deref());
    let outcome = experiment::run_experiment(&cfg, &out_dir)?;
    print!(
        "{}",
        experiment::format_table(
            &cfg.name,
            &[(DPGP_LABEL, outcome.dpgp), (LOGREG_LABEL, outcome.logreg)]
        )
    );
    println!("acceptance rate {:.3}; outputs in {}", outcome.accept_rate, display(&out_dir));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
