//! Orthonormal bases on `[−s, s]`.
//!
//! * Cosine: `e_0 = 1/√(2s)`, `e_k(t) = cos(kπ(t+s)/(2s))/√s`.
//! * Daubechies: periodized wavelets on `u = (t+s)/(2s)`, with
//!   `k = 2^r + j` mapped to `2^{r/2} Σ_l ψ(2^r(u+l) − j)/√(2s)` and
//!   `e_0 = 1/√(2s)`.

use serde::{Deserialize, Serialize};

use super::wavelet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    Cosine,
    Daubechies,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    /// Number of basis functions `e_0 .. e_{m−1}`.
    pub m: usize,
    pub s_x: f64,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, m: usize, s_x: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("basis needs m >= 1".into()));
        }
        if !(s_x > 0.0) || !s_x.is_finite() {
            return Err(Error::InvalidInput(format!("s_x must be > 0, got {s_x}")));
        }
        Ok(Self { family, m, s_x })
    }

    pub fn cosine(m: usize, s_x: f64) -> Result<Self> {
        Self::new(BasisFamily::Cosine, m, s_x)
    }

    pub fn with_m(&self, m: usize) -> Self {
        Self { m, ..*self }
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if t.is_finite() && t.abs() <= self.s_x * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "t = {t} outside [-{s}, {s}]",
                s = self.s_x
            )))
        }
    }

    /// `e_k^{(order)}(t)` for `k < m`, `order ≤ 2`.
    pub fn derivative(&self, k: usize, order: usize, t: f64) -> Result<f64> {
        if k >= self.m {
            return Err(Error::InvalidInput(format!("index {k} >= m = {}", self.m)));
        }
        if order > 2 {
            return Err(Error::Unsupported(format!("derivative order {order}")));
        }
        self.check_t(t)?;
        Ok(self.raw(k, order, t))
    }

    /// `e_k(t)`.
    pub fn eval(&self, k: usize, t: f64) -> Result<f64> {
        self.derivative(k, 0, t)
    }

    /// Fills `out[k] = e_k^{(order)}(t)` for `k < out.len()` (no domain check).
    pub fn fill(&self, order: usize, t: f64, out: &mut [f64]) {
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.raw(k, order, t);
        }
    }

    fn raw(&self, k: usize, order: usize, t: f64) -> f64 {
        let s = self.s_x;
        if k == 0 {
            return if order == 0 { 1.0 / (2.0 * s).sqrt() } else { 0.0 };
        }
        match self.family {
            BasisFamily::Cosine => {
                let w = k as f64 * std::f64::consts::PI / (2.0 * s);
                let x = w * (t + s);
                let amp = 1.0 / s.sqrt();
                match order {
                    0 => amp * x.cos(),
                    1 => -amp * w * x.sin(),
                    _ => -amp * w * w * x.cos(),
                }
            }
            BasisFamily::Daubechies => {
                let tab = wavelet::tables();
                let r = usize::BITS - 1 - k.leading_zeros();
                let j = (k - (1usize << r)) as f64;
                let scale = (1u64 << r) as f64;
                let u = ((t + s) / (2.0 * s)).clamp(0.0, 1.0);
                let lo = ((j / scale) - u).ceil() as i64;
                let hi = (((j + tab.support()) / scale) - u).floor() as i64;
                let mut acc = 0.0;
                for l in lo..=hi {
                    acc += tab.psi(order, scale * (u + l as f64) - j);
                }
                let chain = (scale / (2.0 * s)).powi(order as i32);
                acc * scale.sqrt() * chain / (2.0 * s).sqrt()
            }
        }
    }
}

/// `e_k(t)` for the basis described by `spec`.
pub fn basis_eval(spec: &BasisSpec, k: usize, t: f64) -> Result<f64> {
    spec.eval(k, t)
}

/// Gram matrix `∫ e_j e_k dt` by the midpoint rule with `nodes` points.
pub fn lebesgue_gram(spec: &BasisSpec, nodes: usize) -> Vec<Vec<f64>> {
    let s = spec.s_x;
    let h = 2.0 * s / nodes as f64;
    let mut g = vec![vec![0.0; spec.m]; spec.m];
    let mut e = vec![0.0; spec.m];
    for i in 0..nodes {
        let t = -s + (i as f64 + 0.5) * h;
        spec.fill(0, t, &mut e);
        for a in 0..spec.m {
            for b in 0..spec.m {
                g[a][b] += h * e[a] * e[b];
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn max_off_identity(g: &[Vec<f64>]) -> f64 {
        let mut worst = 0.0_f64;
        for (a, row) in g.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                worst = worst.max((v - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        worst
    }

    #[test]
    fn cosine_examples() {
        let spec = BasisSpec::cosine(4, 1.0).unwrap();
        assert_relative_eq!(basis_eval(&spec, 0, 0.3).unwrap(), 0.7071068, epsilon = 1e-7);
        assert_relative_eq!(basis_eval(&spec, 1, -1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(basis_eval(&spec, 1, 1.5).is_err());
        assert!(basis_eval(&spec, 4, 0.0).is_err());
    }

    #[test]
    fn cosine_gram_is_identity() {
        let spec = BasisSpec::cosine(16, 1.3).unwrap();
        assert!(max_off_identity(&lebesgue_gram(&spec, 512)) < 1e-10);
    }

    #[test]
    fn daubechies_gram_is_identity() {
        let spec = BasisSpec::new(BasisFamily::Daubechies, 32, 1.0).unwrap();
        let err = max_off_identity(&lebesgue_gram(&spec, 1 << 14));
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn cosine_derivatives_match_differences() {
        let spec = BasisSpec::cosine(9, 2.0).unwrap();
        let h = 1e-5;
        for k in 0..9 {
            let t = 0.37;
            let fd1 = (spec.eval(k, t + h).unwrap() - spec.eval(k, t - h).unwrap()) / (2.0 * h);
            let fd2 = (spec.derivative(k, 1, t + h).unwrap() - spec.derivative(k, 1, t - h).unwrap())
                / (2.0 * h);
            assert_relative_eq!(spec.derivative(k, 1, t).unwrap(), fd1, epsilon = 1e-7);
            assert_relative_eq!(spec.derivative(k, 2, t).unwrap(), fd2, epsilon = 1e-6);
        }
    }
}
