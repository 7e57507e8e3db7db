//! Population contrast of the single-index model by quadrature (`p = 2`).
//!
//! Coordinates are `υ = (φ, c_0, …, c_{K−1})` with `K = P_max − 1`. The angle
//! `φ` charts the unit circle around the truth,
//! `θ(φ) = cos φ · θ* + sin φ · θ*⊥`, so `υ* = (0, f*)`. The contrast is
//!
//! ```text
//! EL(υ) = −(n/2) (σ² + E |f(Xᵀθ*) − Σ_k c_k e_k(Xᵀθ(φ))|²).
//! ```
//!
//! Expectations are taken in coordinates aligned with `θ(φ)`: `u = Xᵀθ(φ)`,
//! `w = Xᵀθ(φ)⊥`. The density is radial, so the law of `(u, w)` does not
//! depend on `φ` and the coefficient block of `D²` is a fixed Gram matrix.
//! With `u = s cos ϑ` and `w = √(s² − u²) σ` the weight becomes
//! `c s² sin^{2γ+2}ϑ (1 − σ²)^γ`; `ϑ` uses the midpoint rule and `σ`
//! Gauss–Legendre.

use std::sync::Arc;

use super::basis::{BasisFamily, BasisSpec};
use super::data::SingleIndexTruth;
use crate::contrast::{check_point, ContrastModel};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SieveFrame, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    /// Sample-size factor in front of the expectation.
    pub n: f64,
    /// Midpoint nodes in `ϑ`.
    pub angle_nodes: usize,
    /// Gauss–Legendre nodes along each chord.
    pub chord_nodes: usize,
    /// Compare against doubled orders at construction.
    pub check_quadrature: bool,
    pub quadrature_tolerance: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n: 1000.0,
            angle_nodes: 2048,
            chord_nodes: 16,
            check_quadrature: true,
            quadrature_tolerance: 1e-6,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; order];
    let mut w = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..order {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[order - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[order - 1 - i] = w[i];
    }
    (x, w)
}

struct Core {
    n: f64,
    sigma: f64,
    s: f64,
    k: usize,
    basis: BasisSpec,
    coeffs: Vec<f64>,
    chord: usize,
    u: Vec<f64>,
    /// Row-major `[i * chord + j]`.
    w: Vec<f64>,
    weight: Vec<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
    e0: Matrix,
    e1: Matrix,
    e2: Matrix,
    f_at_u: Vec<f64>,
    gram: Matrix,
}

impl Core {
    fn build(truth: &SingleIndexTruth, family: BasisFamily, k: usize, cfg: &PopulationConfig, nu: usize, nw: usize) -> Self {
        let s = truth.s_x;
        let gamma = truth.density.exponent;
        let basis = BasisSpec { family, m: k, s_x: s };
        let mut coeffs = vec![0.0; k];
        for (c, f) in coeffs.iter_mut().zip(&truth.f_coeffs) {
            *c = *f;
        }
        let (gx, gw) = gauss_legendre(nw);
        let norm = (gamma + 1.0) / (std::f64::consts::PI * s * s);
        let dtheta = std::f64::consts::PI / nu as f64;

        let mut u = Vec::with_capacity(nu);
        let mut w = Vec::with_capacity(nu * nw);
        let mut weight = Vec::with_capacity(nu * nw);
        let mut m1 = Vec::with_capacity(nu);
        let mut m2 = Vec::with_capacity(nu);
        for i in 0..nu {
            let th = (i as f64 + 0.5) * dtheta;
            let (sin, cos) = th.sin_cos();
            let ui = s * cos;
            let half = s * sin;
            let base = norm * s * s * sin.powf(2.0 * gamma + 2.0) * dtheta;
            let (mut a1, mut a2) = (0.0, 0.0);
            for j in 0..nw {
                let wij = half * gx[j];
                let wt = base * gw[j] * (1.0 - gx[j] * gx[j]).powf(gamma);
                w.push(wij);
                weight.push(wt);
                a1 += wt * wij;
                a2 += wt * wij * wij;
            }
            u.push(ui);
            m1.push(a1);
            m2.push(a2);
        }

        let table = |order: usize| {
            let mut t = Matrix::zeros(nu, k);
            let mut row = vec![0.0; k];
            for i in 0..nu {
                basis.fill(order, u[i], &mut row);
                for c in 0..k {
                    t[(i, c)] = row[c];
                }
            }
            t
        };
        let e0 = table(0);
        let e1 = table(1);
        let e2 = table(2);
        let f_at_u: Vec<f64> = (e0.clone() * Vector::from_column_slice(&coeffs)).iter().copied().collect();
        let marginal: Vec<f64> = (0..nu).map(|i| weight[i * nw..(i + 1) * nw].iter().sum()).collect();
        let mut scaled = e0.clone();
        for i in 0..nu {
            scaled.row_mut(i).scale_mut(marginal[i]);
        }
        let gram = crate::linalg::symmetrize(&(e0.transpose() * scaled));

        Self {
            n: cfg.n,
            sigma: truth.sigma,
            s,
            k,
            basis,
            coeffs,
            chord: nw,
            u,
            w,
            weight,
            m1,
            m2,
            e0,
            e1,
            e2,
            f_at_u,
            gram,
        }
    }

    fn link(&self, t: f64) -> f64 {
        let mut e = vec![0.0; self.k];
        self.basis.fill(0, t.clamp(-self.s, self.s), &mut e);
        e.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    fn ups_star(&self) -> Vector {
        let mut v = Vector::zeros(self.k + 1);
        v.rows_mut(1, self.k).copy_from_slice(&self.coeffs);
        v
    }
}

struct Moments {
    value: f64,
    g1: Vector,
    g2: Vector,
    r0: Vector,
    r1: Vector,
    r2: Vector,
}

impl Core {
    fn moments(&self, ups: &Vector) -> Moments {
        let phi = ups[0];
        let c = ups.rows(1, self.k).into_owned();
        let g = &self.e0 * &c;
        let g1 = &self.e1 * &c;
        let g2 = &self.e2 * &c;
        let (sphi, cphi) = phi.sin_cos();
        let nu = self.u.len();
        let mut r0 = Vector::zeros(nu);
        let mut r1 = Vector::zeros(nu);
        let mut r2 = Vector::zeros(nu);
        let mut sq = 0.0;
        for i in 0..nu {
            let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
            for j in 0..self.chord {
                let idx = i * self.chord + j;
                let wij = self.w[idx];
                let wt = self.weight[idx];
                let ft = if phi == 0.0 {
                    self.f_at_u[i]
                } else {
                    self.link(self.u[i] * cphi - wij * sphi)
                };
                let r = ft - g[i];
                a0 += wt * r;
                a1 += wt * r * wij;
                a2 += wt * r * wij * wij;
                a3 += wt * r * r;
            }
            r0[i] = a0;
            r1[i] = a1;
            r2[i] = a2;
            sq += a3;
        }
        Moments {
            value: -0.5 * self.n * (self.sigma * self.sigma + sq),
            g1,
            g2,
            r0,
            r1,
            r2,
        }
    }

    fn gradient(&self, ups: &Vector) -> Vector {
        let m = self.moments(ups);
        let mut out = Vector::zeros(self.k + 1);
        out[0] = self.n * m.g1.dot(&m.r1);
        out.rows_mut(1, self.k).copy_from(&(self.e0.transpose() * &m.r0 * self.n));
        out
    }

    fn neg_hessian(&self, ups: &Vector) -> Matrix {
        let m = self.moments(ups);
        let k = self.k;
        let mut h = Matrix::zeros(k + 1, k + 1);
        h.view_mut((1, 1), (k, k)).copy_from(&(&self.gram * self.n));
        let g1m1 = Vector::from_fn(self.u.len(), |i, _| m.g1[i] * self.m1[i]);
        let cross = (self.e0.transpose() * g1m1 - self.e1.transpose() * &m.r1) * self.n;
        for c in 0..k {
            h[(0, c + 1)] = cross[c];
            h[(c + 1, 0)] = cross[c];
        }
        let mut pp = 0.0;
        for i in 0..self.u.len() {
            pp += m.g1[i] * m.g1[i] * self.m2[i] - m.g2[i] * m.r2[i] + m.g1[i] * self.u[i] * m.r0[i];
        }
        h[(0, 0)] = self.n * pp;
        h
    }
}

/// Population contrast of the single-index model as a [`ContrastModel`].
#[derive(Clone)]
pub struct PopulationModel {
    core: Arc<Core>,
    frame: SieveFrame,
}

impl std::fmt::Debug for PopulationModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PopulationModel")
            .field("frame", &self.frame)
            .field("n", &self.core.n)
            .field("angle_nodes", &self.core.u.len())
            .field("chord_nodes", &self.core.chord)
            .finish()
    }
}

impl PopulationModel {
    /// The same population with a different sieve dimension.
    pub fn with_sieve_dim(&self, m: usize) -> Result<Self> {
        Ok(Self {
            core: Arc::clone(&self.core),
            frame: SieveFrame::new(1, m, self.frame.p_max)?,
        })
    }

    /// `υ* = (0, f*)`, with `f*` truncated to the `P_max − 1` coordinates.
    pub fn ups_star(&self) -> Vector {
        self.core.ups_star()
    }

    /// `E[e_j(Xᵀθ) e_k(Xᵀθ)]` over the first `K` basis functions.
    pub fn gram(&self) -> &Matrix {
        &self.core.gram
    }

    pub fn n(&self) -> f64 {
        self.core.n
    }

    /// Unit vector `θ(φ)` for a chart coordinate, given `θ*`.
    pub fn theta_of(theta_star: &[f64], phi: f64) -> Vector {
        let (s, c) = phi.sin_cos();
        Vector::from_vec(vec![
            c * theta_star[0] - s * theta_star[1],
            c * theta_star[1] + s * theta_star[0],
        ])
    }
}

impl ContrastModel for PopulationModel {
    fn frame(&self) -> SieveFrame {
        self.frame
    }

    fn value(&self, ups: &Vector) -> Result<f64> {
        check_point(self, ups)?;
        Ok(self.core.moments(ups).value)
    }

    fn gradient(&self, ups: &Vector) -> Result<Vector> {
        check_point(self, ups)?;
        Ok(self.core.gradient(ups))
    }

    fn neg_hessian(&self, ups: &Vector) -> Result<Matrix> {
        check_point(self, ups)?;
        Ok(self.core.neg_hessian(ups))
    }
    fn initial_point(&self) -> Vector {
        self.core.ups_star()
    }
}

/// Builds the population model with the default quadrature.
pub fn population_operator(truth: &SingleIndexTruth, spec: &BasisSpec, p_max: usize) -> Result<PopulationModel> {
    population_operator_with(truth, spec, p_max, &PopulationConfig::default())
}

pub fn population_operator_with(
    truth: &SingleIndexTruth,
    spec: &BasisSpec,
    p_max: usize,
    cfg: &PopulationConfig,
) -> Result<PopulationModel> {
    truth.validate()?;
    if truth.p() != 2 {
        return Err(Error::Unsupported(format!(
            "population quadrature is implemented for p = 2, got p = {}",
            truth.p()
        )));
    }
    if spec.family != truth.basis {
        return Err(Error::InvalidInput("basis family differs from the family of the truth".into()));
    }
    if (spec.s_x - truth.s_x).abs() > 1e-12 * truth.s_x {
        return Err(Error::InvalidInput("basis radius differs from s_x of the truth".into()));
    }
    if !(cfg.n > 0.0) || cfg.angle_nodes < 2 || cfg.chord_nodes < 2 {
        return Err(Error::InvalidInput("population config needs n > 0 and at least 2 nodes".into()));
    }
    let frame = SieveFrame::new(1, spec.m, p_max)?;
    let k = p_max - 1;
    let core = Core::build(truth, spec.family, k, cfg, cfg.angle_nodes, cfg.chord_nodes);
    if cfg.check_quadrature {
        let fine = Core::build(truth, spec.family, k, cfg, 2 * cfg.angle_nodes, 2 * cfg.chord_nodes);
        let star = core.ups_star();
        let probe = {
            let mut v = star.clone();
            v[0] = 0.05;
            v
        };
        let mut change = 0.0_f64;
        for point in [&star, &probe] {
            let a = core.neg_hessian(point) / cfg.n;
            let b = fine.neg_hessian(point) / cfg.n;
            change = change.max((a - b).amax());
        }
        if !(change <= cfg.quadrature_tolerance) {
            return Err(Error::QuadratureNonConvergence {
                change,
                tolerance: cfg.quadrature_tolerance,
            });
        }
    }
    Ok(PopulationModel {
        core: Arc::new(core),
        frame,
    })
}

#[cfg(test)]
mod tests {
    use super::super::data::{near_tight_coefficients, DensitySpec};
    use super::*;
    use approx::assert_relative_eq;

    fn truth() -> SingleIndexTruth {
        SingleIndexTruth {
            theta_star: vec![0.6, 0.8],
            f_coeffs: near_tight_coefficients(3.0, 12, 1.0),
            smoothness: 3.0,
            sigma: 0.1,
            s_x: 1.0,
            density: DensitySpec::default(),
            basis: BasisFamily::Cosine,
        }
    }

    fn small() -> PopulationConfig {
        PopulationConfig {
            n: 100.0,
            angle_nodes: 256,
            chord_nodes: 12,
            ..PopulationConfig::default()
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int = |p: i32| x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum::<f64>();
        assert_relative_eq!(int(0), 2.0, epsilon = 1e-14);
        assert_relative_eq!(int(14), 2.0 / 15.0, epsilon = 1e-14);
        assert!(int(7).abs() < 1e-15);
    }

    #[test]
    fn weights_integrate_to_one() {
        let spec = BasisSpec::cosine(4, 1.0).unwrap();
        let m = population_operator_with(&truth(), &spec, 16, &small()).unwrap();
        // e_0² = 1/(2s): the Gram entry is E[1/2] = 1/2.
        assert_relative_eq!(m.gram()[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn optimum_is_stationary_and_derivatives_consistent() {
        let spec = BasisSpec::cosine(4, 1.0).unwrap();
        let cfg = PopulationConfig {
            angle_nodes: 1024,
            chord_nodes: 32,
            ..small()
        };
        let m = population_operator_with(&truth(), &spec, 16, &cfg).unwrap();
        let star = m.ups_star();
        assert!(m.gradient(&star).unwrap().amax() < 1e-10);
        let mut x = star.clone();
        x[0] = 0.1;
        x[3] += 0.05;
        let (ge, he) = crate::contrast::finite_difference_errors(&m, &x, 1e-5).unwrap();
        assert!(ge < 1e-5 && he < 1e-4, "{ge} {he}");
    }

    #[test]
    fn p3_unsupported() {
        let mut t = truth();
        let c = 1.0 / 3f64.sqrt();
        t.theta_star = vec![c, c, c];
        let spec = BasisSpec::cosine(4, 1.0).unwrap();
        assert!(matches!(population_operator(&t, &spec, 16), Err(Error::Unsupported(_))));
    }
}
