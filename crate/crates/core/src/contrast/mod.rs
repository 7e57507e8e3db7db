//! Expected contrast functionals on a truncated ambient space.
//!
//! A [`ContrastModel`] exposes `EL`, its gradient and `D²(υ) = −∇²EL(υ)` on
//! `R^{P_max}`. The full maximizer `υ*` and the sieve maximizer `υ*_{p1}`
//! (first `p*` coordinates free, tail frozen at zero) are found with a
//! trust-region Newton method.

pub(crate) mod ball;
mod trust_region;

pub use ball::{sample_local_ball, LocalBall};
pub use trust_region::{maximize_full, maximize_full_with, TrustRegionOptions, TrustRegionReport};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SieveFrame, Vector};

/// Evaluation contract for an expected contrast `EL` on `R^{P_max}`.
///
/// Implementations must be free of hidden mutable state so that concurrent
/// evaluations are safe.
pub trait ContrastModel: Send + Sync {
    fn frame(&self) -> SieveFrame;

    /// `EL(υ)`.
    fn value(&self, ups: &Vector) -> Result<f64>;

    /// `∇EL(υ)`.
    fn gradient(&self, ups: &Vector) -> Result<Vector>;

    /// `D²(υ) = −∇²EL(υ)`.
    fn neg_hessian(&self, ups: &Vector) -> Result<Matrix>;

    /// Starting point for the solvers.
    fn initial_point(&self) -> Vector {
        Vector::zeros(self.frame().p_max)
    }
}

pub(crate) fn check_point(model: &dyn ContrastModel, ups: &Vector) -> Result<()> {
    let n = model.frame().p_max;
    if ups.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "point has length {}, model dimension is {n}",
            ups.len()
        )));
    }
    if ups.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("point has non-finite entries".into()));
    }
    Ok(())
}

/// Full and sieve-restricted maximizers of a contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimumPair {
    pub ups_star: Vector,
    /// Sieve maximizer embedded in `R^{P_max}` with zero tail.
    pub ups_star_m: Vector,
    pub theta_star: Vector,
    pub theta_star_m: Vector,
}

impl OptimumPair {
    pub fn new(frame: &SieveFrame, ups_star: Vector, ups_star_m: Vector) -> Result<Self> {
        if ups_star.len() != frame.p_max || ups_star_m.len() != frame.p_max {
            return Err(Error::DimensionMismatch(format!(
                "optima must have length {}",
                frame.p_max
            )));
        }
        if frame.tail(&ups_star_m).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidInput("sieve optimum has a nonzero tail".into()));
        }
        Ok(Self {
            theta_star: frame.project_theta(&ups_star),
            theta_star_m: frame.project_theta(&ups_star_m),
            ups_star,
            ups_star_m,
        })
    }
}

/// `κ* = (Id − Π_{p*}) υ*`.
pub fn kappa_star(model: &dyn ContrastModel, ups_star: &Vector) -> Result<Vector> {
    check_point(model, ups_star)?;
    Ok(model.frame().tail(ups_star))
}

/// The contrast restricted to the first `p*` coordinates, tail held at zero.
pub struct SieveRestriction<'a> {
    inner: &'a dyn ContrastModel,
    frame: SieveFrame,
}

impl<'a> SieveRestriction<'a> {
    pub fn new(inner: &'a dyn ContrastModel) -> Result<Self> {
        let outer = inner.frame();
        let frame = SieveFrame::new(outer.p, outer.p1, outer.p_star())?;
        Ok(Self { inner, frame })
    }

    fn lift(&self, v: &Vector) -> Vector {
        self.inner.frame().embed(v)
    }
}

impl ContrastModel for SieveRestriction<'_> {
    fn frame(&self) -> SieveFrame {
        self.frame
    }

    fn value(&self, ups: &Vector) -> Result<f64> {
        check_point(self, ups)?;
        self.inner.value(&self.lift(ups))
    }

    fn gradient(&self, ups: &Vector) -> Result<Vector> {
        check_point(self, ups)?;
        let g = self.inner.gradient(&self.lift(ups))?;
        Ok(g.rows(0, self.frame.p_max).into_owned())
    }

    fn neg_hessian(&self, ups: &Vector) -> Result<Matrix> {
        check_point(self, ups)?;
        let h = self.inner.neg_hessian(&self.lift(ups))?;
        let k = self.frame.p_max;
        Ok(h.view((0, 0), (k, k)).into_owned())
    }

    fn initial_point(&self) -> Vector {
        self.inner
            .initial_point()
            .rows(0, self.frame.p_max)
            .into_owned()
    }
}

/// Computes `υ*` from `model.initial_point()` and `υ*_{p1}` on the sieve.
pub fn maximize_sieve(model: &dyn ContrastModel) -> Result<OptimumPair> {
    maximize_sieve_with(model, &TrustRegionOptions::default())
}

pub fn maximize_sieve_with(
    model: &dyn ContrastModel,
    options: &TrustRegionOptions,
) -> Result<OptimumPair> {
    let frame = model.frame();
    let full = maximize_full_with(model, &model.initial_point(), options)?.point;
    let sieve_m = if frame.has_tail() {
        let restricted = SieveRestriction::new(model)?;
        let opt = maximize_full_with(&restricted, &restricted.initial_point(), options)?;
        frame.embed(&opt.point)
    } else {
        full.clone()
    };
    OptimumPair::new(&frame, full, sieve_m)
}

/// Relative errors of the gradient and Hessian against central differences
/// at one point, `(gradient_error, hessian_error)`.
pub fn finite_difference_errors(model: &dyn ContrastModel, ups: &Vector, h: f64) -> Result<(f64, f64)> {
    check_point(model, ups)?;
    let n = ups.len();
    let g = model.gradient(ups)?;
    let d2 = model.neg_hessian(ups)?;
    let mut g_fd = Vector::zeros(n);
    let mut h_fd = Matrix::zeros(n, n);
    for i in 0..n {
        let mut up = ups.clone();
        let mut dn = ups.clone();
        up[i] += h;
        dn[i] -= h;
        g_fd[i] = (model.value(&up)? - model.value(&dn)?) / (2.0 * h);
        let col = (model.gradient(&up)? - model.gradient(&dn)?) / (2.0 * h);
        h_fd.set_column(i, &(-col));
    }
    let rel = |diff: f64, scale: f64| diff / scale.max(1.0);
    Ok((
        rel((&g - &g_fd).amax(), g.amax()),
        rel((&d2 - &h_fd).amax(), d2.amax()),
    ))
}
