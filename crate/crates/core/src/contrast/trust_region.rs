//! Trust-region Newton iteration for maximizing a smooth contrast.
//!
//! Works on `f = −EL` with model Hessian `B = D²(υ)`. When `B` is not positive
//! definite it is shifted by a multiple of the identity until a Cholesky
//! factorization succeeds; steps longer than the radius are pulled back by
//! bisection on the shift.

use log::debug;
use nalgebra::Cholesky;

use super::{check_point, ContrastModel};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Matrix, Vector};

#[derive(Debug, Clone)]
pub struct TrustRegionOptions {
    pub max_iterations: usize,
    /// Stationarity: `‖∇EL(υ)‖ ≤ gradient_tolerance · (1 + ‖υ‖)`.
    pub gradient_tolerance: f64,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrustRegionReport {
    pub point: Vector,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Maximizes `model` from `init` with default options.
pub fn maximize_full(model: &dyn ContrastModel, init: &Vector) -> Result<Vector> {
    Ok(maximize_full_with(model, init, &TrustRegionOptions::default())?.point)
}

struct Shifted {
    factor: Cholesky<f64, nalgebra::Dyn>,
}

fn factor_with_shift(b: &Matrix, shift: f64) -> Option<Shifted> {
    let n = b.nrows();
    let shifted = b + Matrix::identity(n, n) * shift;
    Cholesky::new(shifted).map(|factor| Shifted { factor })
}

/// Smallest shift `τ ≥ 0` (on a geometric ladder) making `B + τI` factorizable.
fn minimal_shift(b: &Matrix) -> (f64, Shifted) {
    if let Some(f) = factor_with_shift(b, 0.0) {
        return (0.0, f);
    }
    let mut tau = 1e-10 * b.amax().max(1.0);
    loop {
        if let Some(f) = factor_with_shift(b, tau) {
            return (tau, f);
        }
        tau *= 10.0;
    }
}

/// Solves the trust-region subproblem `min gᵀs + ½ sᵀBs, ‖s‖ ≤ radius`
/// approximately. `g` is the gradient of `f = −EL`.
fn subproblem(b: &Matrix, g: &Vector, radius: f64) -> Vector {
    let (tau, f) = minimal_shift(b);
    let step = -f.factor.solve(g);
    if step.norm() <= radius {
        return step;
    }
    let step_at = |lambda: f64| -> Vector {
        match factor_with_shift(b, lambda) {
            Some(f) => -f.factor.solve(g),
            None => Vector::zeros(g.len()),
        }
    };
    let mut lo = tau;
    let mut hi = tau.max(1e-12);
    while step_at(hi).norm() > radius {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if step_at(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    step_at(hi)
}

pub fn maximize_full_with(
    model: &dyn ContrastModel,
    init: &Vector,
    options: &TrustRegionOptions,
) -> Result<TrustRegionReport> {
    check_point(model, init)?;
    let tol = |x: &Vector| options.gradient_tolerance * (1.0 + x.norm());

    let mut x = init.clone();
    let mut f = -model.value(&x)?;
    let mut g = -model.gradient(&x)?;
    if g.norm() <= tol(&x) {
        return Ok(TrustRegionReport {
            value: -f,
            gradient_norm: g.norm(),
            point: x,
            iterations: 0,
        });
    }
    let mut b = symmetrize(&model.neg_hessian(&x)?);
    let mut radius = {
        let (_, fac) = minimal_shift(&b);
        fac.factor.solve(&g).norm().max(1e-8)
    };

    for iter in 1..=options.max_iterations {
        let s = subproblem(&b, &g, radius);
        let predicted = -(g.dot(&s) + 0.5 * s.dot(&(&b * &s)));
        let trial = &x + &s;
        let f_trial = -model.value(&trial)?;
        let actual = f - f_trial;
        let g_trial = -model.gradient(&trial)?;

        let noise_floor = 1e-13 * (1.0 + f.abs());
        let ratio = if predicted > noise_floor {
            actual / predicted
        } else if g_trial.norm() < g.norm() && actual >= -noise_floor {
            1.0
        } else {
            0.0
        };

        if ratio < 0.25 {
            radius = 0.25 * s.norm();
        } else if ratio > 0.75 && s.norm() >= 0.99 * radius {
            radius *= 2.0;
        }

        if ratio > 1e-4 {
            x = trial;
            f = f_trial;
            g = g_trial;
            debug!("trust region iter {iter}: f = {f:.12e}, |g| = {:.3e}", g.norm());
            if g.norm() <= tol(&x) {
                return Ok(TrustRegionReport {
                    value: -f,
                    gradient_norm: g.norm(),
                    point: x,
                    iterations: iter,
                });
            }
            b = symmetrize(&model.neg_hessian(&x)?);
        }
        if radius < 1e-300 {
            break;
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: options.max_iterations,
        grad_norm: g.norm(),
        tolerance: tol(&x),
    })
}
