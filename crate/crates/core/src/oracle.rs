//! Exactly solvable contrasts: pure quadratics and quartic perturbations.
//!
//! For `EL(υ) = −½ (υ − c)ᵀ D2 (υ − c)` every quantity of the bias analysis
//! has a closed form, which makes these families the reference oracles for
//! the solvers, the auditors and the bound formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::contrast::{check_point, ContrastModel, OptimumPair};
use crate::error::{Error, Result};
use crate::linalg::{
    block, check_finite, identifiability_nu, relative_asymmetry, principal_block, profile_matrix, spectral_norm,
    sym_inv_sqrt, sym_sqrt, symmetrize, Matrix, SYMMETRY_TOLERANCE, PartitionedOperator, SieveFrame, SpdFactor,
    Vector,
};

/// `EL(υ) = −½ (υ − center)ᵀ D2 (υ − center)`.
#[derive(Debug, Clone)]
pub struct QuadraticContrast {
    pub d2: Matrix,
    pub center: Vector,
    pub frame: SieveFrame,
}

impl QuadraticContrast {
    pub fn new(d2: Matrix, center: Vector, frame: SieveFrame) -> Result<Self> {
        if d2.nrows() != frame.p_max || center.len() != frame.p_max {
            return Err(Error::DimensionMismatch(format!(
                "D2 is {}x{}, center has length {}, frame expects {}",
                d2.nrows(),
                d2.ncols(),
                center.len(),
                frame.p_max
            )));
        }
        check_finite(&d2, "D2")?;
        let asym = relative_asymmetry(&d2);
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::NotSymmetric(asym));
        }
        SpdFactor::new(&symmetrize(&d2))?;
        Ok(Self {
            d2: symmetrize(&d2),
            center,
            frame,
        })
    }

    /// Blocks of `D2` split at `p*`: `(D_{p1}², A_{p1}, H_{p1}²)`.
    pub fn sieve_blocks(&self) -> (Matrix, Matrix, Matrix) {
        let ps = self.frame.p_star();
        let t = self.frame.tail_dim();
        (
            principal_block(&self.d2, 0, ps),
            block(&self.d2, 0, ps, ps, t),
            principal_block(&self.d2, ps, t),
        )
    }
}

impl ContrastModel for QuadraticContrast {
    fn frame(&self) -> SieveFrame {
        self.frame
    }

    fn value(&self, ups: &Vector) -> Result<f64> {
        check_point(self, ups)?;
        let d = ups - &self.center;
        Ok(-0.5 * d.dot(&(&self.d2 * &d)))
    }

    fn gradient(&self, ups: &Vector) -> Result<Vector> {
        check_point(self, ups)?;
        Ok(-(&self.d2 * (ups - &self.center)))
    }

    fn neg_hessian(&self, ups: &Vector) -> Result<Matrix> {
        check_point(self, ups)?;
        Ok(self.d2.clone())
    }
}

/// `EL = base − (eps/12) Σ wᵢ (υᵢ − centerᵢ)⁴`.
#[derive(Debug, Clone)]
pub struct QuarticPerturbation {
    pub base: QuadraticContrast,
    pub eps: f64,
    pub weights: Vector,
}

impl QuarticPerturbation {
    pub fn new(base: QuadraticContrast, eps: f64, weights: Vector) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidInput(format!("eps must be >= 0, got {eps}")));
        }
        if weights.len() != base.frame.p_max {
            return Err(Error::DimensionMismatch(format!(
                "weights have length {}, expected {}",
                weights.len(),
                base.frame.p_max
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
        }
        Ok(Self { base, eps, weights })
    }
}

impl ContrastModel for QuarticPerturbation {
    fn frame(&self) -> SieveFrame {
        self.base.frame
    }

    fn value(&self, ups: &Vector) -> Result<f64> {
        let q = self.base.value(ups)?;
        let d = ups - &self.base.center;
        let quartic: f64 = d.iter().zip(self.weights.iter()).map(|(x, w)| w * x.powi(4)).sum();
        Ok(q - self.eps / 12.0 * quartic)
    }

    fn gradient(&self, ups: &Vector) -> Result<Vector> {
        let mut g = self.base.gradient(ups)?;
        for i in 0..g.len() {
            let d = ups[i] - self.base.center[i];
            g[i] -= self.eps / 3.0 * self.weights[i] * d.powi(3);
        }
        Ok(g)
    }

    fn neg_hessian(&self, ups: &Vector) -> Result<Matrix> {
        let mut h = self.base.neg_hessian(ups)?;
        for i in 0..h.nrows() {
            let d = ups[i] - self.base.center[i];
            h[(i, i)] += self.eps * self.weights[i] * d * d;
        }
        Ok(h)
    }
}

/// Closed-form optimum pair: `υ*_{p1} = Π υ* + D_{p1}⁻² A_{p1} κ*`.
pub fn exact_sieve_optimum(q: &QuadraticContrast, frame: &SieveFrame) -> Result<OptimumPair> {
    if *frame != q.frame {
        return Err(Error::DimensionMismatch("frame differs from the contrast's frame".into()));
    }
    let ups_star = q.center.clone();
    if !frame.has_tail() {
        return OptimumPair::new(frame, ups_star.clone(), ups_star);
    }
    let (dp2, a, _) = q.sieve_blocks();
    let kappa = frame.tail(&ups_star);
    let shift = SpdFactor::new(&dp2)?.solve_vec(&(a * kappa));
    let sieve = frame.project_sieve(&ups_star) + shift;
    OptimumPair::new(frame, ups_star, frame.embed(&sieve))
}

/// Profile matrix of the sieve block `D_{p1}²` split at `p`.
pub fn sieve_profile(d2: &Matrix, frame: &SieveFrame) -> Result<Matrix> {
    let dp2 = principal_block(d2, 0, frame.p_star());
    profile_matrix(&PartitionedOperator::new(dp2, frame.p)?)
}

/// Profile matrix of the full operator split at `p`.
pub fn full_profile(d2: &Matrix, frame: &SieveFrame) -> Result<Matrix> {
    profile_matrix(&PartitionedOperator::new(d2.clone(), frame.p)?)
}

/// `‖D̆_{p1} (θ*_{p1} − θ*)‖` in closed form.
pub fn exact_bias(q: &QuadraticContrast, frame: &SieveFrame) -> Result<f64> {
    let pair = exact_sieve_optimum(q, frame)?;
    let diff = &pair.theta_star_m - &pair.theta_star;
    let prof = sieve_profile(&q.d2, frame)?;
    Ok(diff.dot(&(prof * &diff)).max(0.0).sqrt())
}

/// Residual `‖D̆⁻² D̆_{p1} v − Π_θ υ°‖` of the representation of the first
/// order condition for the profile comparison, with
/// `υ° = D_{p1}⁻¹ (I − D_{p1}⁻¹ A H⁻² Aᵀ D_{p1}⁻¹)⁻¹ D_{p1}⁻¹ Π_θᵀ D̆_{p1} v`.
pub fn verify_lemma_a4_identity(q: &QuadraticContrast, frame: &SieveFrame, v: &Vector) -> Result<f64> {
    if *frame != q.frame {
        return Err(Error::DimensionMismatch("frame differs from the contrast's frame".into()));
    }
    if v.len() != frame.p {
        return Err(Error::DimensionMismatch(format!(
            "v has length {}, expected {}",
            v.len(),
            frame.p
        )));
    }
    if !frame.has_tail() {
        return Err(Error::InvalidInput("identity needs a nonempty tail".into()));
    }
    let (dp2, a, h2) = q.sieve_blocks();
    let dp_inv = sym_inv_sqrt(&dp2)?;
    let h_inv = sym_inv_sqrt(&h2)?;
    let beta = spectral_norm(&(&h_inv * a.transpose() * &dp_inv))?;
    if beta >= 1.0 {
        return Err(Error::NeumannViolation(beta));
    }

    // Left side through the Schur route.
    let breve_sq = full_profile(&q.d2, frame)?;
    let breve_p1 = sym_sqrt(&sieve_profile(&q.d2, frame)?)?;
    let w = &breve_p1 * v;
    let lhs = SpdFactor::new(&breve_sq)?.solve_vec(&w);

    // Right side through the Neumann-type operator.
    let ps = frame.p_star();
    let h2_inv = SpdFactor::new(&h2)?.inverse();
    let inner = Matrix::identity(ps, ps) - &dp_inv * &a * h2_inv * a.transpose() * &dp_inv;
    let mut embedded = Vector::zeros(ps);
    embedded.rows_mut(0, frame.p).copy_from(&w);
    let inner_inv = inner
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularBlock("I − D⁻¹AH⁻²AᵀD⁻¹".into()))?;
    let ups_circ = &dp_inv * inner_inv * &dp_inv * embedded;
    let rhs = ups_circ.rows(0, frame.p).into_owned();
    Ok((lhs - rhs).norm())
}

/// Random symmetric positive definite matrix `Qᵀ Λ Q` with `Λ` log-uniform on
/// `[0.1, 10]` and `Q` from the QR factorization of a Gaussian matrix.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let lambda = Vector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-1.0..=1.0)));
    symmetrize(&(q.transpose() * Matrix::from_diagonal(&lambda) * q))
}

/// Random quadratic contrast on `frame` with a Gaussian center.
pub fn random_quadratic(frame: SieveFrame, seed: u64) -> QuadraticContrast {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d2 = random_spd(frame.p_max, &mut rng);
    let center = Vector::from_fn(frame.p_max, |_, _| rng.sample::<f64, _>(StandardNormal));
    QuadraticContrast::new(d2, center, frame).expect("random SPD instance is valid")
}

/// Random quartic perturbation with weights uniform on `[0.5, 1.5]`.
pub fn random_quartic(frame: SieveFrame, eps: f64, seed: u64) -> QuarticPerturbation {
    let base = random_quadratic(frame, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let weights = Vector::from_fn(frame.p_max, |_, _| rng.random_range(0.5..=1.5));
    QuarticPerturbation::new(base, eps, weights).expect("random quartic instance is valid")
}

/// Keeps the diagonal blocks `[0,p)`, `[p,p*)`, `[p*,N)` and zeroes the rest.
pub fn block_diagonal_part(m: &Matrix, frame: &SieveFrame) -> Matrix {
    let cuts = [0, frame.p, frame.p_star(), frame.p_max];
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for w in cuts.windows(2) {
        let (s, len) = (w[0], w[1] - w[0]);
        out.view_mut((s, s), (len, len)).copy_from(&principal_block(m, s, len));
    }
    out
}

/// `ρ` of the sieve block split at `p` and `β` of the full operator split at `p*`.
pub fn coupling_levels(d2: &Matrix, frame: &SieveFrame) -> Result<(f64, f64)> {
    let dp2 = principal_block(d2, 0, frame.p_star());
    let rho = identifiability_nu(&PartitionedOperator::new(dp2.clone(), frame.p)?)?.rho;
    let beta = if frame.has_tail() {
        let t = frame.tail_dim();
        let h_inv = sym_inv_sqrt(&principal_block(d2, frame.p_star(), t))?;
        let a = block(d2, 0, frame.p_star(), frame.p_star(), t);
        spectral_norm(&(h_inv * a.transpose() * sym_inv_sqrt(&dp2)?))?
    } else {
        0.0
    };
    Ok((rho, beta))
}

/// Random operator with `ρ < limit` and `β < limit`, obtained by shrinking a
/// random SPD matrix towards its block-diagonal part.
pub fn random_coupled_operator(frame: SieveFrame, limit: f64, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_spd(frame.p_max, &mut rng);
    let diag = block_diagonal_part(&m, &frame);
    let mut t = 1.0;
    for _ in 0..60 {
        let mt = symmetrize(&(&m * t + &diag * (1.0 - t)));
        let (rho, beta) = coupling_levels(&mt, &frame)?;
        if rho < limit && beta < limit {
            return Ok(mt);
        }
        t *= 0.5;
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn three_by_three() -> QuadraticContrast {
        let d2 = Matrix::from_row_slice(3, 3, &[2.0, 0.0, 0.5, 0.0, 1.0, 0.3, 0.5, 0.3, 4.0]);
        QuadraticContrast::new(
            d2,
            Vector::from_vec(vec![0.0, 0.0, 0.2]),
            SieveFrame::new(1, 1, 3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn taylor_shift_matches_hand_value() {
        let q = three_by_three();
        let pair = exact_sieve_optimum(&q, &q.frame).unwrap();
        let (dp2, _, _) = q.sieve_blocks();
        let shift = q.frame.project_sieve(&pair.ups_star_m) - q.frame.project_sieve(&pair.ups_star);
        let norm = shift.dot(&(dp2 * &shift)).sqrt();
        assert_relative_eq!(norm, (0.005f64 + 0.0036).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn decoupled_sieve_optimum_is_projection() {
        let q = QuadraticContrast::new(
            Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 3.0])),
            Vector::from_vec(vec![1.0, 1.0, 1.0]),
            SieveFrame::new(1, 1, 3).unwrap(),
        )
        .unwrap();
        let pair = exact_sieve_optimum(&q, &q.frame).unwrap();
        assert_eq!(pair.ups_star_m.as_slice(), &[1.0, 1.0, 0.0]);
        assert_eq!(exact_bias(&q, &q.frame).unwrap(), 0.0);
        assert!(verify_lemma_a4_identity(&q, &q.frame, &Vector::from_vec(vec![1.0])).unwrap() < 1e-15);
    }

    #[test]
    fn zero_v_gives_zero_residual() {
        let q = random_quadratic(SieveFrame::new(2, 3, 8).unwrap(), 4);
        assert_eq!(verify_lemma_a4_identity(&q, &q.frame, &Vector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn quartic_derivatives_consistent() {
        let q = random_quartic(SieveFrame::new(1, 2, 5).unwrap(), 0.3, 11);
        let x = Vector::from_fn(5, |i, _| 0.3 * i as f64 - 0.5);
        let (ge, he) = crate::contrast::finite_difference_errors(&q, &x, 1e-5).unwrap();
        assert!(ge < 1e-5 && he < 1e-4, "{ge} {he}");
    }

    #[test]
    fn coupled_operator_respects_limit() {
        let frame = SieveFrame::new(2, 3, 9).unwrap();
        for seed in 0..20 {
            let m = random_coupled_operator(frame, 0.9, seed).unwrap();
            let (rho, beta) = coupling_levels(&m, &frame).unwrap();
            assert!(rho < 0.9 && beta < 0.9);
        }
    }
}
