//! Squared-exponential Gaussian process: kernel, Gram factorization and
//! noise-free conditionals.
//!
//! The nugget `σ_ε² δ(x, x′)` applies by *index identity*: it is added to
//! the diagonal of a Gram matrix built from one input set and never to a
//! cross-covariance, even when two distinct points share coordinates.
//! Test-point covariances `K(X*, X*)` are noise-free.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest diagonal term used when factorizing.
pub const JITTER_FLOOR: f64 = 1e-8;
/// Jitter escalation stops after this value.
pub const JITTER_CEILING: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub jitter: f64,
    #[serde(default)]
    pub mean: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            signal_variance: 1.0,
            lengthscale: 1.0,
            jitter: 1e-6,
            mean: 0.0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.signal_variance > 0.0
            && self.signal_variance.is_finite()
            && self.lengthscale > 0.0
            && self.lengthscale.is_finite()
            && self.jitter >= 0.0
            && self.jitter.is_finite()
            && self.mean.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "GP config needs positive signal variance and lengthscale, non-negative jitter: {self:?}"
            )))
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `σ² exp(−‖x − x′‖² / 2ℓ²)`, plus `σ_ε²` when `same_point` is set.
pub fn kernel(x: &[f64], xp: &[f64], same_point: bool, cfg: &GpConfig) -> f64 {
    let se = cfg.signal_variance * (-sq_dist(x, xp) / (2.0 * cfg.lengthscale * cfg.lengthscale)).exp();
    if same_point {
        se + cfg.jitter
    } else {
        se
    }
}

pub(crate) fn check_dims<P: AsRef<[f64]>>(inputs: &[P], dim: Option<usize>) -> Result<usize> {
    let d = dim.or_else(|| inputs.first().map(|p| p.as_ref().len())).unwrap_or(0);
    for (i, p) in inputs.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "input {i} has {} coordinates, expected {d}",
                p.len()
            )));
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("input {i} has non-finite coordinates")));
        }
    }
    Ok(d)
}

/// Noise-free kernel matrix `K(A, B)`.
pub fn cross_kernel<P: AsRef<[f64]>, Q: AsRef<[f64]>>(a: &[P], b: &[Q], cfg: &GpConfig) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel(a[i].as_ref(), b[j].as_ref(), false, cfg))
}

/// `K(X, X) + σ_ε² I`, symmetric by construction.
pub fn kernel_matrix<P: AsRef<[f64]>>(inputs: &[P], cfg: &GpConfig) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(inputs[i].as_ref(), inputs[j].as_ref(), i == j, cfg);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `matrix + jitter·I`, escalating the jitter by ×10
/// from `max(base, 1e-8)` up to `1e-2`. `matrix` must already hold any
/// nugget the caller wants; only the difference up to the jitter tried is
/// added. Returns the factor and the diagonal term finally used.
pub fn cholesky_with_jitter(matrix: &DMatrix<f64>, base: f64) -> Result<(DMatrix<f64>, f64)> {
    let mut jitter = base.max(JITTER_FLOOR);
    loop {
        let extra = jitter - base.max(0.0);
        let mut m = matrix.clone();
        if extra > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += extra;
            }
        }
        if let Some(ch) = m.cholesky() {
            let l = ch.unpack();
            if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok((l, jitter));
            }
        }
        if jitter >= JITTER_CEILING * (1.0 - 1e-12) {
            return Err(Error::Factorization { jitter });
        }
        jitter = (jitter * 10.0).min(JITTER_CEILING);
    }
}

/// Lower Cholesky factor of a training Gram matrix together with its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyGram {
    l: DMatrix<f64>,
    inputs: Vec<Vec<f64>>,
    jitter_used: f64,
}

impl CholeskyGram {
    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Diagonal term that made the factorization succeed.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// `L v`.
    pub fn mul_factor(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.l * v
    }

    /// `Lᵀ v`.
    pub fn mul_factor_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        self.l.tr_mul(v)
    }

    /// Solves `L X = B` in place.
    pub fn solve_lower_mut(&self, b: &mut DMatrix<f64>) {
        let ok = self.l.solve_lower_triangular_mut(b);
        debug_assert!(ok, "factor has a positive diagonal");
    }

    /// In-place `L⁻ᵀ B`.
    pub fn solve_upper_mut(&self, b: &mut DMatrix<f64>) {
        let ok = self.l.tr_solve_lower_triangular_mut(b);
        debug_assert!(ok, "factor has a positive diagonal");
    }

    /// `L⁻¹ v`.
    pub fn solve_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(v)
            .expect("factor has a positive diagonal")
    }

    /// `(L Lᵀ)⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut x = self.solve_lower(v);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }
}

/// Factorizes `K(X, X) + max(σ_ε², 1e-8)·I` under the jitter policy.
pub fn gram<P: AsRef<[f64]>>(inputs: &[P], cfg: &GpConfig) -> Result<CholeskyGram> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyData("cannot build a Gram matrix from zero inputs".into()));
    }
    check_dims(inputs, None)?;
    let k = kernel_matrix(inputs, cfg);
    let (l, jitter_used) = cholesky_with_jitter(&k, cfg.jitter)?;
    Ok(CholeskyGram {
        l,
        inputs: inputs.iter().map(|p| p.as_ref().to_vec()).collect(),
        jitter_used,
    })
}

/// Linear map from training latents to a block of test latents.
///
/// Holds `V = L⁻¹ K(X, X*)` and the conditional covariance
/// `K(X*, X*) − Vᵀ V`, which is shared by every posterior draw.
#[derive(Debug, Clone)]
pub struct Conditional {
    v: DMatrix<f64>,
    cov: DMatrix<f64>,
    mean: f64,
}

impl Conditional {
    pub fn new<Q: AsRef<[f64]>>(chol: &CholeskyGram, test_inputs: &[Q], cfg: &GpConfig) -> Result<Self> {
        check_dims(test_inputs, Some(chol.dim()))?;
        let m = test_inputs.len();
        let mut v = cross_kernel(chol.inputs(), test_inputs, cfg);
        chol.solve_lower_mut(&mut v);
        let mut cov = cross_kernel(test_inputs, test_inputs, cfg);
        cov.gemm_tr(-1.0, &v, &v, 1.0);
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            if cov[(i, i)] < 0.0 {
                cov[(i, i)] = 0.0;
            }
        }
        Ok(Conditional { v, cov, mean: cfg.mean })
    }

    pub fn len(&self) -> usize {
        self.cov.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.cov.nrows() == 0
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Conditional means for whitened training latents, one column per
    /// draw: `mean + Vᵀ U` where `U = L⁻¹ (F − mean)`.
    pub fn means_from_whitened(&self, whitened: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.v.tr_mul(whitened);
        out.add_scalar_mut(self.mean);
        out
    }
}

/// Noise-free GP conditional of `f(X*)` given `f(X) = f_train`.
pub fn conditional<Q: AsRef<[f64]>>(
    chol: &CholeskyGram,
    f_train: &DVector<f64>,
    test_inputs: &[Q],
    cfg: &GpConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if f_train.len() != chol.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} latent values for {} training inputs",
            f_train.len(),
            chol.n()
        )));
    }
    let cond = Conditional::new(chol, test_inputs, cfg)?;
    let centered = f_train.add_scalar(-cfg.mean);
    let u = chol.solve_lower(&centered);
    let u = DMatrix::from_column_slice(u.len(), 1, u.as_slice());
    let means = cond.means_from_whitened(&u);
    Ok((means.column(0).into_owned(), cond.cov))
}
