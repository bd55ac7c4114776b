//! Versioned stage files.
//!
//! JSON documents carry a `format_version` field. CSV files are versioned by
//! their exact header line:
//!
//! | file              | header                               |
//! |-------------------|--------------------------------------|
//! | dataset           | `x1,x2,y`                            |
//! | predictions       | `index,p_mean,p_lo,p_hi`             |
//! | grid              | `x1,x2,p_mean,p_lo,p_hi`             |
//! | latent draws      | `f0,f1,…` (one row per draw)         |
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the written values bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baseline::LogRegModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::{self, GpConfig};
use crate::hmc::{BackendTag, LatentPosterior};
use crate::latent::LatentBackend;
use crate::metrics::MetricsReport;
use crate::predict::{GridResult, PredictiveSummary};

pub const FORMAT_VERSION: u32 = 1;

pub const PREDICTIONS_HEADER: &str = "index,p_mean,p_lo,p_hi";
pub const GRID_HEADER: &str = "x1,x2,p_mean,p_lo,p_hi";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    write_with(path, |w| writeln!(w, "{text}"))
}

/// Reads a JSON document after checking its `format_version`.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>, what: &str) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("format_version").map(|v| v.to_string());
    if found.as_deref() != Some(&FORMAT_VERSION.to_string()) {
        return Err(Error::FormatVersion {
            what: format!("{what} ({})", path.display()),
            expected: format!("format_version {FORMAT_VERSION}"),
            found,
        });
    }
    Ok(serde_json::from_value(value)?)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, lines: &[String], expected: &str, what: &str) -> Result<()> {
    let found = lines.first().map(|l| l.trim_end().to_string());
    if found.as_deref() != Some(expected) {
        return Err(Error::FormatVersion {
            what: format!("{what} ({})", path.display()),
            expected: format!("v{FORMAT_VERSION} header `{expected}`"),
            found,
        });
    }
    Ok(())
}

fn parse_floats(line: &str, lineno: usize, expected: usize) -> Result<Vec<f64>> {
    let vals = line
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
    if vals.len() != expected {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected {expected} fields, found {}", vals.len()),
        });
    }
    Ok(vals)
}

pub fn write_predictions(s: &PredictiveSummary, path: impl AsRef<Path>) -> Result<()> {
    write_with(path.as_ref(), |w| {
        writeln!(w, "{PREDICTIONS_HEADER}")?;
        for i in 0..s.len() {
            writeln!(w, "{i},{:?},{:?},{:?}", s.p_mean[i], s.p_lo[i], s.p_hi[i])?;
        }
        Ok(())
    })
}

/// Reads `(p_mean, p_lo, p_hi)` columns, checking that rows are in index order.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    check_header(path, &lines, PREDICTIONS_HEADER, "predictions")?;
    let (mut m, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
    for (k, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_floats(line, k + 1, 4)?;
        if v[0] != m.len() as f64 {
            return Err(Error::Parse {
                line: k + 1,
                message: format!("expected index {}, found {}", m.len(), v[0]),
            });
        }
        m.push(v[1]);
        lo.push(v[2]);
        hi.push(v[3]);
    }
    Ok((m, lo, hi))
}

pub fn write_grid(g: &GridResult, path: impl AsRef<Path>) -> Result<()> {
    write_with(path.as_ref(), |w| {
        writeln!(w, "{GRID_HEADER}")?;
        let cols = g.grid_x1.len();
        for (r, x2) in g.grid_x2.iter().enumerate() {
            for (c, x1) in g.grid_x1.iter().enumerate() {
                let k = r * cols + c;
                writeln!(w, "{x1:?},{x2:?},{:?},{:?},{:?}", g.p_mean[k], g.p_lo[k], g.p_hi[k])?;
            }
        }
        Ok(())
    })
}

/// Reads the grid rows as `[x1, x2, p_mean, p_lo, p_hi]`.
pub fn read_grid_rows(path: impl AsRef<Path>) -> Result<Vec<[f64; 5]>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    check_header(path, &lines, GRID_HEADER, "grid")?;
    lines
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| parse_floats(l, k + 1, 5).map(|v| [v[0], v[1], v[2], v[3], v[4]]))
        .collect()
}

/// Sidecar describing a draws file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMeta {
    pub format_version: u32,
    pub backend: BackendTag,
    pub latent_backend: LatentBackend,
    pub gp: GpConfig,
    pub n_train: usize,
    pub n_draws: usize,
    pub accept_rate: f64,
    pub step_size: f64,
    pub chain_accept_rates: Vec<f64>,
    /// Draws CSV, relative to the sidecar's directory.
    pub draws_file: String,
}

/// Writes `<stem>.csv` (draws) and `<stem>.json` (sidecar) next to each other.
pub fn write_posterior(
    posterior: &LatentPosterior,
    gp_cfg: &GpConfig,
    backend: &LatentBackend,
    sidecar: impl AsRef<Path>,
) -> Result<()> {
    let sidecar = sidecar.as_ref();
    let draws_path = sidecar.with_extension("csv");
    let draws_file = draws_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::invalid(format!("bad posterior path {}", sidecar.display())))?;
    let d = &posterior.draws;
    write_with(&draws_path, |w| {
        let header: Vec<String> = (0..d.ncols()).map(|i| format!("f{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for r in 0..d.nrows() {
            let row: Vec<String> = d.row(r).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    let meta = PosteriorMeta {
        format_version: FORMAT_VERSION,
        backend: posterior.backend,
        latent_backend: *backend,
        gp: *gp_cfg,
        n_train: posterior.n_train(),
        n_draws: posterior.n_draws(),
        accept_rate: posterior.accept_rate,
        step_size: posterior.step_size,
        chain_accept_rates: posterior.chain_accept_rates.clone(),
        draws_file,
    };
    write_json(&meta, sidecar)
}

/// Reads a posterior and rebuilds its Gram factor from the training data it
/// was fitted on.
pub fn read_posterior(sidecar: impl AsRef<Path>, train: &Dataset) -> Result<(LatentPosterior, PosteriorMeta)> {
    let sidecar = sidecar.as_ref();
    let meta: PosteriorMeta = read_json(sidecar, "posterior")?;
    if meta.n_train != train.len() {
        return Err(Error::DimensionMismatch(format!(
            "posterior was fitted on {} points but the training file has {}",
            meta.n_train,
            train.len()
        )));
    }
    let draws_path: PathBuf = sidecar
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&meta.draws_file);
    let lines = read_lines(&draws_path)?;
    let header: Vec<String> = (0..meta.n_train).map(|i| format!("f{i}")).collect();
    check_header(&draws_path, &lines, &header.join(","), "latent draws")?;
    let mut values = Vec::with_capacity(meta.n_draws * meta.n_train);
    let mut rows = 0;
    for (k, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        values.extend(parse_floats(line, k + 1, meta.n_train)?);
        rows += 1;
    }
    if rows != meta.n_draws {
        return Err(Error::DimensionMismatch(format!(
            "sidecar declares {} draws, file has {rows}",
            meta.n_draws
        )));
    }
    let chol = gp::gram(&train.inputs(), &meta.gp)?;
    let posterior = LatentPosterior {
        draws: DMatrix::from_row_slice(rows, meta.n_train, &values),
        chol,
        accept_rate: meta.accept_rate,
        step_size: meta.step_size,
        backend: meta.backend,
        chain_accept_rates: meta.chain_accept_rates.clone(),
    };
    Ok((posterior, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: LogRegModel,
}

pub fn write_logreg(model: &LogRegModel, path: impl AsRef<Path>) -> Result<()> {
    write_json(
        &LogRegFile {
            format_version: FORMAT_VERSION,
            model: model.clone(),
        },
        path,
    )
}

pub fn read_logreg(path: impl AsRef<Path>) -> Result<LogRegModel> {
    Ok(read_json::<LogRegFile>(path, "logistic regression model")?.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub format_version: u32,
    pub experiment: String,
    pub models: Vec<ModelMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_moons;
    use crate::latent::fit;

    #[test]
    fn predictions_round_trip() {
        let s = PredictiveSummary {
            p_mean: vec![0.1, 0.5, 1.0 / 3.0],
            p_lo: vec![0.0, 0.25, 0.1],
            p_hi: vec![0.2, 0.75, 0.9],
            level: 0.9,
            per_draw: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_predictions(&s, &p).unwrap();
        let (m, lo, hi) = read_predictions(&p).unwrap();
        assert_eq!((m, lo, hi), (s.p_mean, s.p_lo, s.p_hi));
    }

    #[test]
    fn wrong_header_names_expected_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        std::fs::write(&p, "a,b,c\n1,2,3\n").unwrap();
        let e = read_predictions(&p).unwrap_err();
        assert!(matches!(e, Error::FormatVersion { .. }));
        assert!(e.to_string().contains(PREDICTIONS_HEADER), "{e}");
    }

    #[test]
    fn json_version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"format_version": 7, "weights": [0.0], "converged": true, "iterations": 1}"#).unwrap();
        assert!(matches!(read_logreg(&p), Err(Error::FormatVersion { .. })));
        std::fs::write(&p, r#"{"weights": [0.0], "converged": true, "iterations": 1}"#).unwrap();
        assert!(matches!(read_logreg(&p), Err(Error::FormatVersion { found: None, .. })));
    }

    #[test]
    fn posterior_round_trip_and_size_check() {
        let d = make_moons(20, 0.2, 1).unwrap();
        let cfg = GpConfig::default();
        let backend = LatentBackend::analytic(1.0);
        let post = fit(&d, &cfg, &backend).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("posterior.json");
        write_posterior(&post, &cfg, &backend, &p).unwrap();
        assert!(dir.path().join("posterior.csv").exists());
        let (back, meta) = read_posterior(&p, &d).unwrap();
        assert_eq!(back.draws, post.draws);
        assert_eq!(back.chol, post.chol);
        assert_eq!(meta.latent_backend, backend);

        let smaller = make_moons(18, 0.2, 1).unwrap();
        assert!(matches!(read_posterior(&p, &smaller), Err(Error::DimensionMismatch(_))));
    }
}
