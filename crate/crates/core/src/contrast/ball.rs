use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{relative_asymmetry, symmetrize, Matrix, SpdFactor, Vector};

/// The local set `{υ : ‖D0 (υ − center)‖ ≤ radius}`.
#[derive(Debug, Clone)]
pub struct LocalBall {
    pub center: Vector,
    pub d0: Matrix,
    pub radius: f64,
}

impl LocalBall {
    pub fn new(center: Vector, d0: Matrix, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("radius must be >= 0, got {radius}")));
        }
        if !d0.is_square() || d0.nrows() != center.len() {
            return Err(Error::DimensionMismatch(format!(
                "D0 is {}x{}, center has length {}",
                d0.nrows(),
                d0.ncols(),
                center.len()
            )));
        }
        Ok(Self { center, d0, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `‖D0 (υ − center)‖`.
    pub fn norm_of(&self, ups: &Vector) -> f64 {
        (&self.d0 * (ups - &self.center)).norm()
    }

    pub fn contains(&self, ups: &Vector) -> bool {
        self.norm_of(ups) <= self.radius
    }
}

/// Inverts `D0` for sampling; a singular `D0` is an error.
pub(crate) fn invert_d0(d0: &Matrix) -> Result<Matrix> {
    if relative_asymmetry(d0) <= 1e-12 {
        if let Ok(f) = SpdFactor::new(&symmetrize(d0)) {
            return Ok(f.inverse());
        }
    }
    let inv = d0
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularBlock("D0 is singular".into()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularBlock("D0 is singular".into()));
    }
    Ok(inv)
}

/// Unit-ball directions `z` with `‖z‖ ≤ 1`, generated in antithetic pairs.
///
/// Pair `k` is `(z_k, −z_k)`; every even pair lies on the unit sphere. The
/// sequence for a given seed is prefix-stable: asking for more points never
/// changes the earlier ones.
pub(crate) fn unit_ball_draws(dim: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut pair = 0usize;
    while out.len() < count {
        let mut z = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        if norm == 0.0 {
            continue;
        }
        z /= norm;
        let u: f64 = rng.random();
        if pair % 2 == 1 {
            z *= u.powf(1.0 / dim as f64);
        }
        out.push(z.clone());
        if out.len() < count {
            out.push(-z);
        }
        pair += 1;
    }
    out
}

/// Draws `count` points of the ellipsoid `‖D0 (υ − center)‖ ≤ r`, uniform in
/// the interior with half of the draws on the boundary. Deterministic per seed.
pub fn sample_local_ball(ball: &LocalBall, count: usize, seed: u64) -> Result<Vec<Vector>> {
    if ball.radius == 0.0 {
        return Ok(vec![ball.center.clone(); count]);
    }
    let d0_inv = invert_d0(&ball.d0)?;
    Ok(unit_ball_draws(ball.dim(), count, seed)
        .into_iter()
        .map(|z| place(ball, &d0_inv, &z))
        .collect())
}

/// Maps a unit-ball direction into the ellipsoid, pulling it back inside if
/// rounding pushes the norm past the radius.
pub(crate) fn place(ball: &LocalBall, d0_inv: &Matrix, z: &Vector) -> Vector {
    let mut step = d0_inv * (z * ball.radius);
    let mut point = &ball.center + &step;
    for _ in 0..16 {
        let norm = ball.norm_of(&point);
        if norm <= ball.radius {
            break;
        }
        step *= (ball.radius / norm) * (1.0 - 4.0 * f64::EPSILON);
        point = &ball.center + &step;
    }
    point
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(r: f64) -> LocalBall {
        LocalBall::new(
            Vector::from_vec(vec![1.0, -2.0, 0.5]),
            Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 3.0]),
            r,
        )
        .unwrap()
    }

    #[test]
    fn zero_radius_returns_center() {
        let b = ball(0.0);
        for p in sample_local_ball(&b, 10, 1).unwrap() {
            assert_eq!(p, b.center);
        }
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let b = ball(1.5);
        let a = sample_local_ball(&b, 50, 9).unwrap();
        let c = sample_local_ball(&b, 80, 9).unwrap();
        assert_eq!(a[..], c[..50]);
    }

    #[test]
    fn all_inside_with_boundary_share() {
        let b = ball(1.5);
        let pts = sample_local_ball(&b, 400, 3).unwrap();
        let on_boundary = pts
            .iter()
            .filter(|p| (b.norm_of(p) - 1.5).abs() < 1e-12)
            .count();
        assert!(pts.iter().all(|p| b.contains(p)));
        assert!(on_boundary * 4 >= pts.len());
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(LocalBall::new(Vector::zeros(1), Matrix::identity(1, 1), -1.0).is_err());
    }

    #[test]
    fn singular_d0_rejected() {
        let b = LocalBall::new(Vector::zeros(2), Matrix::zeros(2, 2), 1.0).unwrap();
        assert!(sample_local_ball(&b, 3, 0).is_err());
    }
}
