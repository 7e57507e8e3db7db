//! Model truth, simulated datasets and the sample contrast.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::basis::{BasisFamily, BasisSpec};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Radial density `d(x) ∝ (1 − ‖x‖²/s²)₊^exponent` on the ball of radius `s`.
///
/// Exponents below 1 give a density that is not Lipschitz at the boundary
/// and are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub exponent: f64,
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self { exponent: 1.0 }
    }
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.exponent >= 1.0) || !self.exponent.is_finite() {
            return Err(Error::InvalidInput(format!(
                "density exponent must be finite and >= 1, got {}",
                self.exponent
            )));
        }
        Ok(())
    }

    /// Unnormalized density at squared relative radius `q = ‖x‖²/s²`.
    pub fn shape(&self, q: f64) -> f64 {
        if q >= 1.0 {
            0.0
        } else {
            (1.0 - q).powf(self.exponent)
        }
    }
}

/// Parameters generating data and population quantities for
/// `Y = f(Xᵀθ*) + ε`, `f = Σ_k f*_k e_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleIndexTruth {
    pub theta_star: Vec<f64>,
    pub f_coeffs: Vec<f64>,
    /// Decay exponent `a > 2` of the coefficients.
    pub smoothness: f64,
    pub sigma: f64,
    pub s_x: f64,
    #[serde(default)]
    pub density: DensitySpec,
    #[serde(default = "default_family")]
    pub basis: BasisFamily,
}

fn default_family() -> BasisFamily {
    BasisFamily::Cosine
}

/// `f*_l = amplitude · (l+1)^{−(a + 0.6)}` for `l < count`.
pub fn near_tight_coefficients(a: f64, count: usize, amplitude: f64) -> Vec<f64> {
    (0..count)
        .map(|l| amplitude * ((l + 1) as f64).powf(-(a + 0.6)))
        .collect()
}

impl SingleIndexTruth {
    pub fn validate(&self) -> Result<()> {
        let norm: f64 = self.theta_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        if self.theta_star.is_empty() || (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("theta_star must be a unit vector, norm {norm}")));
        }
        if !(self.theta_star[0] > 0.0) {
            return Err(Error::InvalidInput("theta_star must have a positive first coordinate".into()));
        }
        if self.f_coeffs.is_empty() || self.f_coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("f_coeffs must be nonempty and finite".into()));
        }
        if !(self.smoothness > 2.0) {
            return Err(Error::InvalidInput(format!("smoothness must be > 2, got {}", self.smoothness)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.s_x > 0.0) || !self.s_x.is_finite() {
            return Err(Error::InvalidInput(format!("s_x must be > 0, got {}", self.s_x)));
        }
        self.density.validate()
    }

    pub fn p(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta(&self) -> Vector {
        Vector::from_column_slice(&self.theta_star)
    }

    /// Basis carrying the full coefficient vector.
    pub fn link_basis(&self) -> BasisSpec {
        BasisSpec {
            family: self.basis,
            m: self.f_coeffs.len(),
            s_x: self.s_x,
        }
    }

    /// `f(t) = Σ_k f*_k e_k(t)`.
    pub fn link(&self, t: f64) -> Result<f64> {
        let spec = self.link_basis();
        let mut e = vec![0.0; spec.m];
        spec.eval(0, t)?;
        spec.fill(0, t, &mut e);
        Ok(e.iter().zip(&self.f_coeffs).map(|(a, b)| a * b).sum())
    }

    /// `Σ_l l^{2a} (f*_l)²`.
    pub fn smoothness_constant(&self) -> f64 {
        self.f_coeffs
            .iter()
            .enumerate()
            .map(|(l, f)| (l as f64).powf(2.0 * self.smoothness) * f * f)
            .sum()
    }
}

/// Design points (rows of `x`) and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vector,
    pub seed: u64,
    pub n: usize,
}

impl Dataset {
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// CSV with columns `x_1..x_p,y`.
    pub fn to_csv(&self) -> String {
        let mut out = (1..=self.p()).map(|j| format!("x_{j}")).collect::<Vec<_>>().join(",");
        out.push_str(",y\n");
        for i in 0..self.n {
            for j in 0..self.p() {
                out.push_str(&format!("{:e},", self.x[(i, j)]));
            }
            out.push_str(&format!("{:e}\n", self.y[i]));
        }
        out
    }

    pub fn from_csv(text: &str, seed: u64) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty dataset".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let p = cols.len().saturating_sub(1);
        let expected: Vec<String> = (1..=p).map(|j| format!("x_{j}")).chain(["y".to_string()]).collect();
        if p == 0 || cols != expected {
            return Err(Error::Parse(format!("line 1: expected header `{}`", expected.join(","))));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
            if vals.len() != p + 1 {
                return Err(Error::Parse(format!("line {}: expected {} fields", i + 2, p + 1)));
            }
            xs.extend_from_slice(&vals[..p]);
            ys.push(vals[p]);
        }
        let n = ys.len();
        Ok(Self {
            x: Matrix::from_row_slice(n, p, &xs),
            y: Vector::from_vec(ys),
            seed,
            n,
        })
    }
}

/// Draws one point from the radial density by rejection from the uniform
/// distribution on the ball.
fn draw_point(rng: &mut ChaCha8Rng, p: usize, s: f64, density: &DensitySpec) -> Vector {
    loop {
        let mut z = Vector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let radius = s * u.powf(1.0 / p as f64);
        z *= radius / norm;
        let accept: f64 = rng.random();
        if accept < density.shape((radius / s).powi(2)) && z.norm() <= s {
            return z;
        }
    }
}

/// `n` i.i.d. observations of the model, deterministic per seed.
pub fn sample_dataset(truth: &SingleIndexTruth, n: usize, seed: u64) -> Result<Dataset> {
    truth.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let p = truth.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, truth.sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let theta = truth.theta();
    let mut x = Matrix::zeros(n, p);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let xi = draw_point(&mut rng, p, truth.s_x, &truth.density);
        let t = xi.dot(&theta).clamp(-truth.s_x, truth.s_x);
        let eps = if truth.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        y[i] = truth.link(t)? + eps;
        x.set_row(i, &xi.transpose());
    }
    Ok(Dataset { x, y, seed, n })
}

pub(crate) fn check_unit(theta: &Vector, p: usize) -> Result<()> {
    if theta.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "theta has length {}, data has p = {p}",
            theta.len()
        )));
    }
    if (theta.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("theta must be a unit vector, norm {}", theta.norm())));
    }
    Ok(())
}

/// Design matrix `B[i, k] = e_k^{(order)}(X_iᵀθ)`.
pub fn design(data: &Dataset, spec: &BasisSpec, theta: &Vector, order: usize) -> Matrix {
    let mut b = Matrix::zeros(data.n, spec.m);
    let mut row = vec![0.0; spec.m];
    for i in 0..data.n {
        let t = (data.x.row(i) * theta)[0].clamp(-spec.s_x, spec.s_x);
        spec.fill(order, t, &mut row);
        for k in 0..spec.m {
            b[(i, k)] = row[k];
        }
    }
    b
}

/// `L(θ, η) = −½ Σ_i (Y_i − Σ_k η_k e_k(X_iᵀθ))²`.
pub fn contrast_value(data: &Dataset, spec: &BasisSpec, theta: &Vector, eta: &Vector) -> Result<f64> {
    check_unit(theta, data.p())?;
    if eta.len() != spec.m {
        return Err(Error::DimensionMismatch(format!(
            "eta has length {}, basis has m = {}",
            eta.len(),
            spec.m
        )));
    }
    let fitted = design(data, spec, theta, 0) * eta;
    Ok(-0.5 * (&data.y - fitted).norm_squared())
}
