//! Numerical estimates of the scalars entering the bias conditions.
//!
//! Exact block quantities (`α`, `τ`, `β`, `C_κ`, cross term) are read from
//! `D²` at `υ*` with the split at `p*`. The local quantities `δ(r)` and `b`
//! are one-sided sampling estimates: `δ̂(r)` never exceeds the true supremum
//! and `b̂` is never below the true infimum.

use log::warn;
use serde::Serialize;

use crate::contrast::ball::{invert_d0, place, unit_ball_draws};
use crate::contrast::{check_point, kappa_star, ContrastModel, LocalBall, OptimumPair};
use crate::error::{Error, Result};
use crate::linalg::{
    block, identifiability_nu, principal_block, spectral_norm, sym_inv_sqrt, sym_sqrt, symmetrize,
    Matrix, PartitionedOperator, SieveFrame, Vector,
};

/// Equispaced grid of `size` points on `[0, 1]`, endpoints included.
pub fn lambda_grid(size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..size).map(|i| i as f64 / (size - 1) as f64).collect(),
    }
}

/// `(D_{p1}², A_{p1}, H_{p1}²)` from `D²` split at `p*`.
pub fn sieve_blocks(d2: &Matrix, frame: &SieveFrame) -> (Matrix, Matrix, Matrix) {
    let ps = frame.p_star();
    let t = frame.tail_dim();
    (
        principal_block(d2, 0, ps),
        block(d2, 0, ps, ps, t),
        principal_block(d2, ps, t),
    )
}

fn sieve_inv_root(d2: &Matrix, frame: &SieveFrame) -> Result<Matrix> {
    let dp2 = principal_block(d2, 0, frame.p_star());
    crate::linalg::SpdFactor::new(&dp2)
        .map_err(|e| Error::SingularBlock(format!("D_p1: {e}")))?;
    sym_inv_sqrt(&dp2)
}

/// Point `(Π_{p*} υ*, λ κ*)`.
fn lambda_point(frame: &SieveFrame, ups_star: &Vector, lambda: f64) -> Vector {
    let mut out = ups_star.clone();
    let ps = frame.p_star();
    for i in ps..frame.p_max {
        out[i] *= lambda;
    }
    out
}

/// `‖D_{p1}⁻¹ A_{p1} κ*‖` at `υ*`.
pub fn alpha_of_m(model: &dyn ContrastModel, opt: &OptimumPair) -> Result<f64> {
    let frame = model.frame();
    if !frame.has_tail() {
        return Ok(0.0);
    }
    let kappa = kappa_star(model, &opt.ups_star)?;
    if kappa.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let d2 = model.neg_hessian(&opt.ups_star)?;
    let dp_inv = sieve_inv_root(&d2, &frame)?;
    let (_, a, _) = sieve_blocks(&d2, &frame);
    Ok((dp_inv * a * kappa).norm())
}

/// `max_λ ‖D_{p1}⁻¹ (A(Π_{p*}υ*, λκ*) − A(υ*)) κ*‖` over `grid`.
pub fn tau_of_m(model: &dyn ContrastModel, opt: &OptimumPair, grid: &[f64]) -> Result<f64> {
    let frame = model.frame();
    if !frame.has_tail() {
        return Ok(0.0);
    }
    let kappa = kappa_star(model, &opt.ups_star)?;
    if kappa.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let d2 = model.neg_hessian(&opt.ups_star)?;
    let dp_inv = sieve_inv_root(&d2, &frame)?;
    let (_, a_star, _) = sieve_blocks(&d2, &frame);
    let mut worst = 0.0_f64;
    for &lambda in grid {
        let point = lambda_point(&frame, &opt.ups_star, lambda);
        let (_, a_l, _) = sieve_blocks(&model.neg_hessian(&point)?, &frame);
        worst = worst.max((&dp_inv * (a_l - &a_star) * &kappa).norm());
    }
    Ok(worst)
}

/// `max_λ |κ*ᵀ (H²(υ*) − H²(Π_{p*}υ*, λκ*)) κ*|` over `grid`.
pub fn cross_term(model: &dyn ContrastModel, opt: &OptimumPair, grid: &[f64]) -> Result<f64> {
    let frame = model.frame();
    if !frame.has_tail() {
        return Ok(0.0);
    }
    Ok(cross_term_profile(model, opt, grid)?
        .into_iter()
        .fold(0.0_f64, |acc, (_, v)| acc.max(v)))
}

/// The cross term at every grid point, `(λ, value)`.
pub fn cross_term_profile(
    model: &dyn ContrastModel,
    opt: &OptimumPair,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let frame = model.frame();
    if !frame.has_tail() {
        return Ok(grid.iter().map(|&l| (l, 0.0)).collect());
    }
    let kappa = kappa_star(model, &opt.ups_star)?;
    let (_, _, h_star) = sieve_blocks(&model.neg_hessian(&opt.ups_star)?, &frame);
    grid.iter()
        .map(|&lambda| {
            let point = lambda_point(&frame, &opt.ups_star, lambda);
            let (_, _, h_l) = sieve_blocks(&model.neg_hessian(&point)?, &frame);
            Ok((lambda, kappa.dot(&((&h_star - h_l) * &kappa)).abs()))
        })
        .collect()
}

/// `‖H⁻¹ Aᵀ D_{p1}⁻¹‖` at `υ*`.
pub fn beta_of_m(model: &dyn ContrastModel, opt: &OptimumPair) -> Result<f64> {
    let frame = model.frame();
    if !frame.has_tail() {
        return Ok(0.0);
    }
    let d2 = model.neg_hessian(&opt.ups_star)?;
    beta_from_hessian(&d2, &frame)
}

pub(crate) fn beta_from_hessian(d2: &Matrix, frame: &SieveFrame) -> Result<f64> {
    let dp_inv = sieve_inv_root(d2, frame)?;
    let (_, a, h2) = sieve_blocks(d2, frame);
    crate::linalg::SpdFactor::new(&h2).map_err(|e| Error::SingularBlock(format!("H: {e}")))?;
    let h_inv = sym_inv_sqrt(&h2)?;
    spectral_norm(&(h_inv * a.transpose() * dp_inv))
}

/// `‖H_{p1} κ*‖² / p1`, the smallest admissible `C_κ`.
pub fn c_kappa(model: &dyn ContrastModel, opt: &OptimumPair) -> Result<f64> {
    Ok(h_kappa_sq(model, opt)? / model.frame().p1 as f64)
}

/// `‖H_{p1} κ*‖² = κ*ᵀ H² κ*`.
pub fn h_kappa_sq(model: &dyn ContrastModel, opt: &OptimumPair) -> Result<f64> {
    let frame = model.frame();
    if !frame.has_tail() {
        return Ok(0.0);
    }
    let kappa = kappa_star(model, &opt.ups_star)?;
    let (_, _, h2) = sieve_blocks(&model.neg_hessian(&opt.ups_star)?, &frame);
    Ok(kappa.dot(&(h2 * &kappa)).max(0.0))
}

fn embed_leading(center: &Vector, local: &Vector) -> Vector {
    let mut out = center.clone();
    out.rows_mut(0, local.len()).copy_from(local);
    out
}

fn distortion(model: &dyn ContrastModel, d0_inv: &Matrix, point: &Vector) -> Result<f64> {
    let k = d0_inv.nrows();
    let h = principal_block(&model.neg_hessian(point)?, 0, k);
    let x = symmetrize(&(d0_inv * h * d0_inv)) - Matrix::identity(k, k);
    spectral_norm(&x)
}

/// `δ̂(r) = max ‖D0⁻¹ D²(υ) D0⁻¹ − I‖` over `count` samples of the local set
/// around `center`, plus the center itself.
///
/// `D0` may be smaller than the ambient dimension; it then acts on the
/// leading coordinates, the others stay at their `center` values, and the
/// matching leading block of `D²` is used.
pub fn estimate_delta(
    model: &dyn ContrastModel,
    d0: &Matrix,
    center: &Vector,
    r: f64,
    count: usize,
    seed: u64,
) -> Result<f64> {
    Ok(estimate_delta_curve(model, d0, center, &[r], count, seed)?[0].1)
}

/// `δ̂` on a list of radii. The result is nondecreasing along the sorted radii:
/// each value is the maximum over the samples of all radii up to it.
pub fn estimate_delta_curve(
    model: &dyn ContrastModel,
    d0: &Matrix,
    center: &Vector,
    radii: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check_point(model, center)?;
    let k = d0.nrows();
    if !d0.is_square() || k == 0 || k > center.len() {
        return Err(Error::DimensionMismatch(format!(
            "D0 is {}x{}, ambient dimension {}",
            d0.nrows(),
            d0.ncols(),
            center.len()
        )));
    }
    if radii.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidInput("radii must be finite and >= 0".into()));
    }
    let d0_inv = invert_d0(d0)?;
    let local_center = center.rows(0, k).into_owned();
    let draws = unit_ball_draws(k, count, seed);

    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let mut running = distortion(model, &d0_inv, center)?;
    let mut out = vec![(0.0, 0.0); radii.len()];
    for idx in order {
        let r = radii[idx];
        if r > 0.0 {
            let ball = LocalBall::new(local_center.clone(), d0.clone(), r)?;
            for z in &draws {
                let point = embed_leading(center, &place(&ball, &d0_inv, z));
                running = running.max(distortion(model, &d0_inv, &point)?);
            }
        }
        out[idx] = (r, running);
    }
    Ok(out)
}

/// `b̂ = min −(EL(υ) − EL(υ*)) / ‖D (υ − υ*)‖²` over the shell
/// `r_min ≤ ‖D (υ − υ*)‖ ≤ r_max`.
///
/// Like `D0` in [`estimate_delta`], `D` may act on leading coordinates only.
/// A nonpositive ratio means the contrast does not decrease along the sampled
/// direction and is reported as an error.
pub fn estimate_b(
    model: &dyn ContrastModel,
    ups_star: &Vector,
    d: &Matrix,
    r_min: f64,
    r_max: f64,
    count: usize,
    seed: u64,
) -> Result<f64> {
    check_point(model, ups_star)?;
    if !(r_min > 0.0) || !(r_max >= r_min) || !r_max.is_finite() {
        return Err(Error::InvalidInput(format!(
            "need 0 < r_min <= r_max, got r_min={r_min}, r_max={r_max}"
        )));
    }
    let k = d.nrows();
    if !d.is_square() || k == 0 || k > ups_star.len() {
        return Err(Error::DimensionMismatch(format!(
            "D is {}x{}, ambient dimension {}",
            d.nrows(),
            d.ncols(),
            ups_star.len()
        )));
    }
    let d_inv = invert_d0(d)?;
    let base = model.value(ups_star)?;
    let local = ups_star.rows(0, k).into_owned();
    let draws = unit_ball_draws(k, count, seed);

    let mut best = f64::INFINITY;
    for (i, z) in draws.iter().enumerate() {
        let pair = i / 2;
        let zn = z.norm();
        let dir = z / zn;
        let radius = match pair % 4 {
            0 => r_min,
            2 => r_max,
            _ => r_min + (r_max - r_min) * zn,
        };
        let step = &d_inv * (&dir * radius);
        let norm = (d * &step).norm();
        if norm == 0.0 {
            continue;
        }
        let point = embed_leading(ups_star, &(&local + &step));
        let drop = base - model.value(&point)?;
        let ratio = drop / (norm * norm);
        if !(ratio > 0.0) {
            return Err(Error::NotConcave {
                ratio,
                distance: norm,
            });
        }
        best = best.min(ratio);
    }
    Ok(best)
}

/// Sampling and grid settings for an audit.
#[derive(Debug, Clone, Serialize)]
pub struct AuditConfig {
    pub delta_samples: usize,
    pub b_samples: usize,
    pub seed: u64,
    pub lambda_grid_size: usize,
    pub b_r_min: f64,
    pub b_r_max: f64,
    /// Number of nonzero radii in the `δ̂` curve on `[0, 2 r*]`.
    pub delta_radii: usize,
    /// Exponent applied to `C_κ` inside `r*` (1 or 2).
    pub c_kappa_power: u8,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            delta_samples: 400,
            b_samples: 400,
            seed: 0,
            lambda_grid_size: 21,
            b_r_min: 0.01,
            b_r_max: 10.0,
            delta_radii: 8,
            c_kappa_power: 1,
        }
    }
}

/// All audited scalars for one model.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub p1: usize,
    pub nu_rho: f64,
    pub nu_rho_squared: f64,
    /// `(r, δ̂(r))` on `[0, 2 r*]`, nondecreasing in `r`.
    pub delta_of_r: Vec<(f64, f64)>,
    pub b_hat: f64,
    pub alpha_m: f64,
    pub tau_m: f64,
    pub beta_m: f64,
    pub c_kappa: f64,
    pub cross_term_max: f64,
    pub r_star: f64,
    pub delta_r_star: f64,
    pub delta_2r_star: f64,
    pub delta_samples: usize,
    pub b_samples: usize,
    pub seed: u64,
}

impl AuditReport {
    pub const CSV_HEADER: &'static str = "p1,nu_rho,nu_rho_squared,b_hat,alpha_m,tau_m,beta_m,c_kappa,cross_term_max,r_star,delta_r_star,delta_2r_star,delta_samples,b_samples,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.p1,
            fmt_f(self.nu_rho),
            fmt_f(self.nu_rho_squared),
            fmt_f(self.b_hat),
            fmt_f(self.alpha_m),
            fmt_f(self.tau_m),
            fmt_f(self.beta_m),
            fmt_f(self.c_kappa),
            fmt_f(self.cross_term_max),
            fmt_f(self.r_star),
            fmt_f(self.delta_r_star),
            fmt_f(self.delta_2r_star),
            self.delta_samples,
            self.b_samples,
            self.seed
        )
    }
}

/// Fixed-format float for CSV output: `inf`, `-inf`, `nan` or `{:.12e}`.
pub fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.12e}")
    }
}

/// `ν` of the sieve block at `υ*`, split at `p`.
pub fn sieve_nu(d2: &Matrix, frame: &SieveFrame) -> Result<(f64, f64)> {
    let dp2 = principal_block(d2, 0, frame.p_star());
    let nu = identifiability_nu(&PartitionedOperator::new(dp2, frame.p)?)?;
    Ok((nu.rho, nu.rho_squared))
}

/// Runs every auditor at the optima in `opt`.
///
/// `b̂` uses `D = (D²(υ*))^{1/2}` around `υ*`; `δ̂` uses `D0 = D_{p1}(υ*)`
/// around `υ*_{p1}` on radii `2 r* · k / delta_radii`.
pub fn run_audit(model: &dyn ContrastModel, opt: &OptimumPair, config: &AuditConfig) -> Result<AuditReport> {
    let frame = model.frame();
    let d2 = model.neg_hessian(&opt.ups_star)?;
    let (nu_rho, nu_rho_squared) = sieve_nu(&d2, &frame)?;
    let grid = lambda_grid(config.lambda_grid_size);

    let alpha_m = alpha_of_m(model, opt)?;
    let tau_m = tau_of_m(model, opt, &grid)?;
    let beta_m = beta_of_m(model, opt)?;
    let c_k = c_kappa(model, opt)?;
    let cross = cross_term(model, opt, &grid)?;

    let d_full = sym_sqrt(&d2)?;
    let b_hat = estimate_b(
        model,
        &opt.ups_star,
        &d_full,
        config.b_r_min,
        config.b_r_max,
        config.b_samples,
        config.seed,
    )?;
    let r_star = crate::certificate::r_star(c_k, frame.p1, b_hat, config.c_kappa_power)?;

    let d0 = sym_sqrt(&principal_block(&d2, 0, frame.p_star()))?;
    let steps = config.delta_radii.max(2);
    let steps = steps + steps % 2;
    let radii: Vec<f64> = (0..=steps).map(|k| 2.0 * r_star * k as f64 / steps as f64).collect();
    let delta_of_r = estimate_delta_curve(
        model,
        &d0,
        &opt.ups_star_m,
        &radii,
        config.delta_samples,
        config.seed.wrapping_add(1),
    )?;
    let delta_r_star = delta_of_r[steps / 2].1;
    let delta_2r_star = delta_of_r[steps].1;
    if b_hat <= 0.0 {
        warn!("b_hat = {b_hat} is not positive");
    }
    Ok(AuditReport {
        p1: frame.p1,
        nu_rho,
        nu_rho_squared,
        delta_of_r,
        b_hat,
        alpha_m,
        tau_m,
        beta_m,
        c_kappa: c_k,
        cross_term_max: cross,
        r_star,
        delta_r_star,
        delta_2r_star,
        delta_samples: config.delta_samples,
        b_samples: config.b_samples,
        seed: config.seed,
    })
}
