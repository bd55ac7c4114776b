//! Gamma and Beta variates.
//!
//! Gamma draws use Marsaglia and Tsang's squeeze method. Shapes below one
//! are boosted through `G(a) = G(a + 1) · U^{1/a}`, evaluated in log space
//! so that Beta draws with tiny shape parameters stay finite.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// `ln G` for `G ~ Gamma(shape, 1)`, `shape > 0`.
pub fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && shape.is_finite());
    if shape < 1.0 {
        let boosted = ln_gamma_variate(shape + 1.0, rng);
        let u: f64 = open01(rng);
        return boosted + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x: f64 = StandardNormal.sample(rng);
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u: f64 = open01(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return (d * v).ln();
        }
    }
}

#[cfg(test)]
pub fn gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    ln_gamma_variate(shape, rng).exp()
}

/// `Beta(a, b)` as `X / (X + Y)` with independent Gamma variates.
pub fn beta_variate<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let lx = ln_gamma_variate(a, rng);
    let ly = ln_gamma_variate(b, rng);
    // X / (X + Y) = 1 / (1 + exp(ln Y − ln X))
    let d = ly - lx;
    if d > 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn gamma_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for shape in [0.3, 1.0, 2.5, 40.0] {
            let xs: Vec<f64> = (0..100_000).map(|_| gamma_variate(shape, &mut rng)).collect();
            let (m, v) = moments(&xs);
            let se = (shape / 1e5).sqrt();
            assert!((m - shape).abs() < 4.0 * se, "shape {shape}: mean {m}");
            assert!((v - shape).abs() / shape < 0.05, "shape {shape}: var {v}");
        }
    }

    #[test]
    fn symmetric_beta_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..100_000).map(|_| beta_variate(2.0, 2.0, &mut rng)).collect();
        let (m, _) = moments(&xs);
        assert!((m - 0.5).abs() <= 0.005);
    }

    #[test]
    fn beta_mean_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (a, b) in [(0.5, 0.5), (2.5, 1.5), (300.7, 0.3), (0.02, 700.0)] {
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| beta_variate(a, b, &mut rng)).collect();
            assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
            let (m, v) = moments(&xs);
            let s = a + b;
            let mean = a / s;
            let var = a * b / (s * s * (s + 1.0));
            assert!((m - mean).abs() <= 3.0 * (var / n as f64).sqrt() + 1e-12, "({a},{b}) mean {m} vs {mean}");
            // Var of the sample variance uses the fourth central moment.
            let k4 = 6.0 * ((a - b).powi(2) * (s + 1.0) - a * b * (s + 2.0)) / (a * b * (s + 2.0) * (s + 3.0));
            let mu4 = (k4 + 3.0) * var * var;
            let se_var = ((mu4 - var * var) / n as f64).sqrt();
            assert!((v - var).abs() <= 3.0 * se_var, "({a},{b}) var {v} vs {var}");
        }
    }

    #[test]
    fn tiny_shapes_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = beta_variate(1e-4, 1e-4, &mut rng);
            assert!(x.is_finite() && (0.0..=1.0).contains(&x));
        }
    }
}
