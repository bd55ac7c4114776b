//! Synthetic two-class datasets, seeded train/test splits and the `x1,x2,y`
//! CSV format.
//!
//! Both generators place points on a uniform angle grid before adding
//! isotropic Gaussian noise, so a zero-noise dataset is exact geometry and
//! does not depend on the seed. Noise is drawn from the
//! [`Domain::DatasetNoise`](crate::rng::Domain) ChaCha8 stream: two standard
//! normals per point, `x1` first, in point order.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

pub const CSV_HEADER: [&str; 3] = ["x1", "x2", "y"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: [f64; 2],
    pub y: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub seed: u64,
    pub points: Vec<LabeledPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Moons,
    Circles,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn inputs(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.points.iter().map(|p| p.y).collect()
    }

    /// Number of points per class, `[count0, count1]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.points.iter().filter(|p| p.y == 1).count();
        [self.points.len() - ones, ones]
    }

    /// Fails unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        match self.class_counts() {
            [0, 0] => Err(Error::EmptyData("dataset has no points".into())),
            [0, _] => Err(Error::SingleClass(1)),
            [_, 0] => Err(Error::SingleClass(0)),
            _ => Ok(()),
        }
    }

    /// Axis-aligned bounding box `(x1_min, x1_max, x2_min, x2_max)`.
    pub fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.points.first()?;
        let init = (first.x[0], first.x[0], first.x[1], first.x[1]);
        Some(self.points.iter().fold(init, |(a, b, c, d), p| {
            (a.min(p.x[0]), b.max(p.x[0]), c.min(p.x[1]), d.max(p.x[1]))
        }))
    }
}

fn check_count(n: usize) -> Result<()> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "n must be even and at least 4, got {n}"
        )));
    }
    Ok(())
}

fn check_noise(noise_sigma: f64) -> Result<()> {
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::invalid(format!(
            "noise sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    Ok(())
}

/// `n` evenly spaced values on `[start, stop]`, endpoints included.
fn linspace_closed(start: f64, stop: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (stop - start) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n && n > 1 { stop } else { start + step * i as f64 })
}

fn add_noise(points: &mut [LabeledPoint], noise_sigma: f64, seed: u64) {
    if noise_sigma == 0.0 {
        return;
    }
    let mut rng = rng::base(seed, Domain::DatasetNoise);
    for p in points.iter_mut() {
        for c in p.x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c += noise_sigma * z;
        }
    }
}

/// Two interleaving half circles. Class 0 is `(cos θ, sin θ)`, class 1 is
/// `(1 − cos θ, 0.5 − sin θ)`, with θ on a closed grid over `[0, π]`.
pub fn make_moons(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    check_count(n)?;
    check_noise(noise_sigma)?;
    let half = n / 2;
    let mut points = Vec::with_capacity(n);
    points.extend(linspace_closed(0.0, PI, half).map(|t| LabeledPoint {
        x: [t.cos(), t.sin()],
        y: 0,
    }));
    points.extend(linspace_closed(0.0, PI, half).map(|t| LabeledPoint {
        x: [1.0 - t.cos(), 0.5 - t.sin()],
        y: 1,
    }));
    add_noise(&mut points, noise_sigma, seed);
    Ok(Dataset {
        name: "moons".into(),
        seed,
        points,
    })
}

/// Two concentric rings: class 0 on the unit circle, class 1 on the circle
/// of radius `inner_radius_factor`. Angles are `2πk/(n/2)`, `k = 0..n/2`.
pub fn make_circles(
    n: usize,
    noise_sigma: f64,
    inner_radius_factor: f64,
    seed: u64,
) -> Result<Dataset> {
    check_count(n)?;
    check_noise(noise_sigma)?;
    if !(inner_radius_factor > 0.0 && inner_radius_factor < 1.0) {
        return Err(Error::invalid(format!(
            "inner radius factor must lie in (0, 1), got {inner_radius_factor}"
        )));
    }
    let half = n / 2;
    let angle = |k: usize| 2.0 * PI * k as f64 / half as f64;
    let mut points = Vec::with_capacity(n);
    points.extend((0..half).map(|k| {
        let t = angle(k);
        LabeledPoint {
            x: [t.cos(), t.sin()],
            y: 0,
        }
    }));
    points.extend((0..half).map(|k| {
        let t = angle(k);
        LabeledPoint {
            x: [inner_radius_factor * t.cos(), inner_radius_factor * t.sin()],
            y: 1,
        }
    }));
    add_noise(&mut points, noise_sigma, seed);
    Ok(Dataset {
        name: "circles".into(),
        seed,
        points,
    })
}

pub const DEFAULT_INNER_RADIUS_FACTOR: f64 = 0.5;

/// Generates a dataset by kind with the default circle factor.
pub fn generate(kind: DatasetKind, n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    match kind {
        DatasetKind::Moons => make_moons(n, noise_sigma, seed),
        DatasetKind::Circles => make_circles(n, noise_sigma, DEFAULT_INNER_RADIUS_FACTOR, seed),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub train_fraction: f64,
    /// Positions of the training points in the source dataset.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Seeded uniform permutation followed by a prefix split. The training set
/// gets `round(train_fraction * n)` points and must contain both classes.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = d.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::invalid(format!(
            "split of {n} points at fraction {train_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::base(seed, Domain::Split));
    let (tr, te) = order.split_at(n_train);
    let pick = |idx: &[usize], suffix: &str| Dataset {
        name: format!("{}-{suffix}", d.name),
        seed: d.seed,
        points: idx.iter().map(|&i| d.points[i]).collect(),
    };
    let train = pick(tr, "train");
    train.require_both_classes()?;
    Ok(SplitDataset {
        test: pick(te, "test"),
        train,
        train_fraction,
        train_indices: tr.to_vec(),
        test_indices: te.to_vec(),
    })
}

/// Writes `x1,x2,y` rows with shortest round-trip float formatting.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "{}", CSV_HEADER.join(","))?;
        for p in &d.points {
            writeln!(w, "{:?},{:?},{}", p.x[0], p.x[1], p.y)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Reads a dataset written by [`write_csv`]. The dataset name is the file
/// stem; the seed is not stored in the file and reads back as 0.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(file, name)
}

pub(crate) fn parse_csv<R: std::io::Read>(reader: R, name: String) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    match records.next() {
        None => return Err(Error::EmptyData("no data rows".into())),
        Some(header) => {
            let header = header.map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?;
            let fields: Vec<&str> = header.iter().map(str::trim).collect();
            if fields != CSV_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `x1,x2,y`, found `{}`", fields.join(",")),
                });
            }
        }
    }
    let mut points = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| Error::Parse { line, message };
        if rec.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", rec.len())));
        }
        let coord = |i: usize| -> Result<f64> {
            let raw = rec[i].trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(err(format!("{} is not a finite number: `{raw}`", CSV_HEADER[i]))),
            }
        };
        let x = [coord(0)?, coord(1)?];
        let y = match rec[2].trim() {
            "0" => 0,
            "1" => 1,
            _ => return Err(err("label must be 0 or 1".into())),
        };
        points.push(LabeledPoint { x, y });
    }
    if points.is_empty() {
        return Err(Error::EmptyData("no data rows".into()));
    }
    Ok(Dataset {
        name,
        seed: 0,
        points,
    })
}
