//! Sieve profile least squares for the single-index model.
//!
//! For fixed `θ` the contrast is quadratic in `η`, so `η̂(θ)` is a ridge-floored
//! least-squares solve. The direction is updated by projected Gauss–Newton on
//! the unit sphere with backtracking on the profile contrast, which makes the
//! recorded contrast sequence nondecreasing.

use log::{debug, warn};
use serde::Serialize;

use super::basis::BasisSpec;
use super::data::{check_unit, design, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SpdFactor, Vector};

pub const RIDGE_FLOOR: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 500;
pub const GAIN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct FitTrace {
    /// Profile contrast after each accepted iterate, starting at the initial `θ`.
    pub contrast: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest ridge used for the `η` solves.
    pub ridge: f64,
}

#[derive(Debug, Clone)]
pub struct ProfileFit {
    pub theta: Vector,
    pub eta: Vector,
    pub trace: FitTrace,
}

struct Inner {
    eta: Vector,
    value: f64,
    ridge: f64,
}

/// `η̂(θ)` and the profile contrast `L(θ, η̂(θ))`.
fn solve_eta(data: &Dataset, spec: &BasisSpec, theta: &Vector) -> Result<Inner> {
    let b = design(data, spec, theta, 0);
    let gram = b.transpose() * &b;
    let rhs = b.transpose() * &data.y;
    let m = spec.m;
    let mut ridge = RIDGE_FLOOR;
    let factor = loop {
        let g = &gram + Matrix::identity(m, m) * ridge;
        match SpdFactor::new(&g) {
            Ok(f) => break f,
            Err(_) if ridge < 1e6 => ridge *= 100.0,
            Err(e) => return Err(e),
        }
    };
    if ridge > RIDGE_FLOOR {
        warn!("rank-deficient design: ridge raised to {ridge:.1e}");
    }
    let eta = factor.solve_vec(&rhs);
    let value = -0.5 * (&data.y - &b * &eta).norm_squared();
    Ok(Inner { eta, value, ridge })
}

/// `θ` on the half sphere: flips the sign when the first coordinate is negative.
fn half_sphere(mut theta: Vector) -> Vector {
    theta /= theta.norm();
    if theta[0] < 0.0 {
        theta = -theta;
    }
    theta
}

/// Gauss–Newton direction in the tangent space at `theta`.
fn gauss_newton_step(data: &Dataset, spec: &BasisSpec, theta: &Vector, eta: &Vector) -> Vector {
    let p = data.p();
    let b0 = design(data, spec, theta, 0);
    let b1 = design(data, spec, theta, 1);
    let resid = &data.y - b0 * eta;
    let slope = b1 * eta;
    let proj = Matrix::identity(p, p) - theta * theta.transpose();
    let mut j = &data.x * &proj;
    for i in 0..data.n {
        let s = slope[i];
        j.row_mut(i).scale_mut(s);
    }
    let jtj = j.transpose() * &j;
    let mu = 1e-10 * jtj.trace().max(1e-300);
    let lhs = jtj + Matrix::identity(p, p) * mu;
    let rhs = j.transpose() * resid;
    let step = lhs
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| Vector::zeros(p));
    &proj * step
}

/// Profile estimator started at `init_theta`.
pub fn profile_fit(data: &Dataset, spec: &BasisSpec, init_theta: &Vector) -> Result<ProfileFit> {
    check_unit(init_theta, data.p())?;
    if !(init_theta[0] > 0.0) {
        return Err(Error::InvalidInput("initial theta must have a positive first coordinate".into()));
    }
    let mut theta = init_theta.clone();
    let mut cur = solve_eta(data, spec, &theta)?;
    let mut ridge = cur.ridge;
    let mut contrast = vec![cur.value];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let step = gauss_newton_step(data, spec, &theta, &cur.eta);
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..40 {
            let cand = half_sphere(&theta + &step * scale);
            let inner = solve_eta(data, spec, &cand)?;
            if inner.value >= cur.value {
                accepted = Some((cand, inner));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, inner)) = accepted else {
            converged = true;
            break;
        };
        let gain = inner.value - cur.value;
        theta = cand;
        ridge = ridge.max(inner.ridge);
        cur = inner;
        contrast.push(cur.value);
        debug!("profile fit iter {iterations}: contrast {:.12e}, gain {gain:.3e}", cur.value);
        if gain < GAIN_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("profile fit stopped after {MAX_ITERATIONS} iterations");
    }
    Ok(ProfileFit {
        theta,
        eta: cur.eta,
        trace: FitTrace {
            contrast,
            iterations,
            converged,
            ridge,
        },
    })
}

/// Profile contrast `max_η L(θ, η)`.
pub fn profile_contrast(data: &Dataset, spec: &BasisSpec, theta: &Vector) -> Result<f64> {
    check_unit(theta, data.p())?;
    Ok(solve_eta(data, spec, theta)?.value)
}

/// Best direction on an angular grid of the half circle (`p = 2` only).
pub fn grid_initializer(data: &Dataset, spec: &BasisSpec, points: usize) -> Result<Vector> {
    if data.p() != 2 {
        return Err(Error::Unsupported(format!("grid initializer needs p = 2, got {}", data.p())));
    }
    let half = std::f64::consts::FRAC_PI_2;
    let mut best = (f64::NEG_INFINITY, Vector::from_vec(vec![1.0, 0.0]));
    for i in 0..points.max(1) {
        let phi = -half + std::f64::consts::PI * (i as f64 + 0.5) / points.max(1) as f64;
        let theta = Vector::from_vec(vec![phi.cos(), phi.sin()]);
        let v = solve_eta(data, spec, &theta)?.value;
        if v > best.0 {
            best = (v, theta);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::super::data::{near_tight_coefficients, sample_dataset, DensitySpec, SingleIndexTruth};
    use super::super::basis::BasisFamily;
    use super::*;

    fn truth(sigma: f64, coeffs: usize) -> SingleIndexTruth {
        SingleIndexTruth {
            theta_star: vec![0.8, 0.6],
            f_coeffs: near_tight_coefficients(3.0, coeffs, 2.0),
            smoothness: 3.0,
            sigma,
            s_x: 1.0,
            density: DensitySpec::default(),
            basis: BasisFamily::Cosine,
        }
    }

    #[test]
    fn trace_is_monotone_and_output_constrained() {
        let t = truth(0.1, 20);
        let d = sample_dataset(&t, 600, 4).unwrap();
        let spec = BasisSpec::cosine(10, 1.0).unwrap();
        let init = Vector::from_vec(vec![0.6, 0.8]);
        let fit = profile_fit(&d, &spec, &init).unwrap();
        assert!(fit.trace.contrast.windows(2).all(|w| w[1] >= w[0]));
        assert!((fit.theta.norm() - 1.0).abs() < 1e-12 && fit.theta[0] > 0.0);
    }

    #[test]
    fn noiseless_recovery() {
        let t = truth(0.0, 8);
        let d = sample_dataset(&t, 400, 7).unwrap();
        let spec = BasisSpec::cosine(8, 1.0).unwrap();
        let init = Vector::from_vec(vec![0.75, 0.661437827766]);
        let init = &init / init.norm();
        let fit = profile_fit(&d, &spec, &init).unwrap();
        assert!((fit.theta - t.theta()).norm() < 1e-6);
    }
}
