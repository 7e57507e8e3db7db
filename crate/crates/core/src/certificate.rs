//! Closed-form bias bounds and certificate assembly.

use log::info;
use serde::Serialize;

use crate::audit::{fmt_f, run_audit, AuditConfig, AuditReport};
use crate::contrast::{maximize_sieve, ContrastModel, OptimumPair};
use crate::error::{Error, Result};
use crate::linalg::{matrix_closeness, principal_block, sym_sqrt, PartitionedOperator, SieveFrame};
use crate::linalg::{profile_matrix, Matrix};

fn check_power(power: u8, what: &str) -> Result<()> {
    if power == 1 || power == 2 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be 1 or 2, got {power}")))
    }
}

fn check_nonneg(v: f64, what: &str) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be finite and >= 0, got {v}")))
    }
}

/// `r* = √(4 c p1 / b)` with `c = c_kappa^power`.
pub fn r_star(c_kappa: f64, p1: usize, b: f64, c_kappa_power: u8) -> Result<f64> {
    check_power(c_kappa_power, "c_kappa_power")?;
    check_nonneg(c_kappa, "c_kappa")?;
    if !(b > 0.0) {
        return Err(Error::BoundInapplicable(format!("b must be > 0, got {b}")));
    }
    let c = c_kappa.powi(c_kappa_power as i32);
    Ok((4.0 * c * p1 as f64 / b).sqrt())
}

/// `√((1+ν²)/(1−ν²)) · (α + τ + 2 δ(2r*) r*)`.
pub fn hat_alpha(nu: f64, alpha_m: f64, tau_m: f64, delta_2rstar: f64, r_star: f64) -> Result<f64> {
    hat_alpha_with(nu, 2, alpha_m, tau_m, delta_2rstar, r_star)
}

/// As [`hat_alpha`] with the factor `√((1+ρ^k)/(1−ρ^k))`, `k = nu_power`.
pub fn hat_alpha_with(
    rho: f64,
    nu_power: u8,
    alpha_m: f64,
    tau_m: f64,
    delta_2rstar: f64,
    r_star: f64,
) -> Result<f64> {
    check_power(nu_power, "nu_power")?;
    for (v, n) in [(rho, "nu"), (alpha_m, "alpha"), (tau_m, "tau"), (delta_2rstar, "delta"), (r_star, "r_star")] {
        check_nonneg(v, n)?;
    }
    if rho >= 1.0 {
        return Err(Error::IdentifiabilityViolation(rho));
    }
    let nu = rho.powi(nu_power as i32);
    Ok(((1.0 + nu) / (1.0 - nu)).sqrt() * (alpha_m + tau_m + 2.0 * delta_2rstar * r_star))
}

/// `(1+ν²+β²)/(1−ν²) · β²/(1−β²)`.
pub fn bound_a4(nu: f64, beta: f64) -> Result<f64> {
    bound_a4_with(nu, 2, beta)
}

/// As [`bound_a4`] with `ν²` replaced by `ρ^k`, `k = nu_power`.
pub fn bound_a4_with(rho: f64, nu_power: u8, beta: f64) -> Result<f64> {
    check_power(nu_power, "nu_power")?;
    check_nonneg(rho, "nu")?;
    check_nonneg(beta, "beta")?;
    if rho >= 1.0 {
        return Err(Error::IdentifiabilityViolation(rho));
    }
    if beta >= 1.0 {
        return Err(Error::NeumannViolation(beta));
    }
    let nu = rho.powi(nu_power as i32);
    let b2 = beta * beta;
    Ok((1.0 + nu + b2) / (1.0 - nu) * b2 / (1.0 - b2))
}

/// `δ / (1 − 2δ)`.
pub fn bound_a5(delta_rstar: f64) -> Result<f64> {
    check_nonneg(delta_rstar, "delta")?;
    if delta_rstar >= 0.5 {
        return Err(Error::BoundInapplicable(format!(
            "delta(r*) = {delta_rstar} >= 0.5"
        )));
    }
    Ok(delta_rstar / (1.0 - 2.0 * delta_rstar))
}

/// Profile root `D̆` of the sieve block of `d2` (split at `p`).
pub fn sieve_profile_root(d2: &Matrix, frame: &SieveFrame) -> Result<Matrix> {
    let dp2 = principal_block(d2, 0, frame.p_star());
    sym_sqrt(&profile_matrix(&PartitionedOperator::new(dp2, frame.p)?)?)
}

/// Profile root `D̆` of the full `d2` (split at `p`).
pub fn full_profile_root(d2: &Matrix, frame: &SieveFrame) -> Result<Matrix> {
    sym_sqrt(&profile_matrix(&PartitionedOperator::new(d2.clone(), frame.p)?)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateConfig {
    pub audit: AuditConfig,
    pub nu_power: u8,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            audit: AuditConfig::default(),
            nu_power: 2,
        }
    }
}

/// Values measured directly on the model, for comparison with the bounds.
#[derive(Debug, Clone, Serialize)]
pub struct MeasuredBias {
    /// `‖D̆_{p1}(θ*_{p1} − θ*)‖`, profile of the sieve block at `υ*`.
    pub bias: f64,
    /// `‖D(υ*_{p1} − υ*)‖` with `D = D(υ*)`.
    pub localization: f64,
    /// `‖I − D̆_{p1}⁻¹ D̆² D̆_{p1}⁻¹‖` at `υ*`.
    pub closeness_a4: f64,
    /// `‖I − D̆_{p1}(υ*_{p1})⁻¹ D̆_{p1}(υ*)² D̆_{p1}(υ*_{p1})⁻¹‖`.
    pub closeness_a5: f64,
}

pub fn measure(model: &dyn ContrastModel, opt: &OptimumPair) -> Result<MeasuredBias> {
    let frame = model.frame();
    let d2_star = model.neg_hessian(&opt.ups_star)?;
    let d2_m = model.neg_hessian(&opt.ups_star_m)?;
    let breve_p1 = sieve_profile_root(&d2_star, &frame)?;
    let dtheta = &opt.theta_star_m - &opt.theta_star;
    let diff = &opt.ups_star_m - &opt.ups_star;
    let breve_full = full_profile_root(&d2_star, &frame)?;
    let breve_p1_m = sieve_profile_root(&d2_m, &frame)?;
    Ok(MeasuredBias {
        bias: (&breve_p1 * dtheta).norm(),
        localization: diff.dot(&(&d2_star * &diff)).max(0.0).sqrt(),
        closeness_a4: matrix_closeness(&breve_p1, &breve_full)?,
        closeness_a5: matrix_closeness(&breve_p1_m, &breve_p1)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidityFlags {
    pub nu_below_one: bool,
    pub beta_below_one: bool,
    pub delta_below_half: bool,
    pub b_positive: bool,
}

impl ValidityFlags {
    pub fn all(&self) -> bool {
        self.nu_below_one && self.beta_below_one && self.delta_below_half && self.b_positive
    }
}

/// Audited inputs, bound values and flags. Bounds that do not apply are `inf`.
#[derive(Debug, Clone, Serialize)]
pub struct BiasCertificate {
    pub inputs: AuditReport,
    pub r_star: f64,
    pub hat_alpha: f64,
    pub bound_a4: f64,
    pub bound_a5: f64,
    pub nu_power: u8,
    pub c_kappa_power: u8,
    pub flags: ValidityFlags,
    pub binding: bool,
    pub measured: MeasuredBias,
}

impl BiasCertificate {
    pub const CSV_HEADER: &'static str = "p1,nu_rho,beta_m,alpha_m,tau_m,c_kappa,b_hat,delta_r_star,delta_2r_star,r_star,hat_alpha,bound_a4,bound_a5,measured_bias,measured_localization,measured_a4,measured_a5,nu_power,c_kappa_power,binding";

    pub fn csv_row(&self) -> String {
        let a = &self.inputs;
        let m = &self.measured;
        [
            a.p1.to_string(),
            fmt_f(a.nu_rho),
            fmt_f(a.beta_m),
            fmt_f(a.alpha_m),
            fmt_f(a.tau_m),
            fmt_f(a.c_kappa),
            fmt_f(a.b_hat),
            fmt_f(a.delta_r_star),
            fmt_f(a.delta_2r_star),
            fmt_f(self.r_star),
            fmt_f(self.hat_alpha),
            fmt_f(self.bound_a4),
            fmt_f(self.bound_a5),
            fmt_f(m.bias),
            fmt_f(m.localization),
            fmt_f(m.closeness_a4),
            fmt_f(m.closeness_a5),
            self.nu_power.to_string(),
            self.c_kappa_power.to_string(),
            self.binding.to_string(),
        ]
        .join(",")
    }

    /// Plain-text summary.
    pub fn report(&self) -> String {
        let a = &self.inputs;
        let m = &self.measured;
        let mut s = String::new();
        s.push_str(&format!("sieve dimension p1        {}\n", a.p1));
        s.push_str(&format!("rho (nu_power = {})        {:.6e}\n", self.nu_power, a.nu_rho));
        s.push_str(&format!("beta                      {:.6e}\n", a.beta_m));
        s.push_str(&format!("alpha                     {:.6e}\n", a.alpha_m));
        s.push_str(&format!("tau                       {:.6e}\n", a.tau_m));
        s.push_str(&format!("C_kappa                   {:.6e}\n", a.c_kappa));
        s.push_str(&format!("b                         {:.6e}\n", a.b_hat));
        s.push_str(&format!("delta(r*)                 {:.6e}\n", a.delta_r_star));
        s.push_str(&format!("delta(2r*)                {:.6e}\n", a.delta_2r_star));
        s.push_str(&format!("r*                        {:.6e}\n", self.r_star));
        s.push_str(&format!("bias bound                {:.6e}   measured {:.6e}\n", self.hat_alpha, m.bias));
        s.push_str(&format!("profile closeness bound   {:.6e}   measured {:.6e}\n", self.bound_a4, m.closeness_a4));
        s.push_str(&format!("local closeness bound     {:.6e}   measured {:.6e}\n", self.bound_a5, m.closeness_a5));
        s.push_str(&format!("localization r*           {:.6e}   measured {:.6e}\n", self.r_star, m.localization));
        s.push_str(&format!(
            "flags: nu<1 {}  beta<1 {}  delta<1/2 {}  b>0 {}\n",
            self.flags.nu_below_one, self.flags.beta_below_one, self.flags.delta_below_half, self.flags.b_positive
        ));
        s.push_str(&format!("binding                   {}\n", self.binding));
        s
    }
}

/// Maximizes the model, audits it and evaluates every bound.
pub fn assemble_certificate(model: &dyn ContrastModel, config: &CertificateConfig) -> Result<BiasCertificate> {
    let opt = maximize_sieve(model)?;
    certificate_at(model, &opt, config)
}

/// As [`assemble_certificate`] with known optima.
pub fn certificate_at(
    model: &dyn ContrastModel,
    opt: &OptimumPair,
    config: &CertificateConfig,
) -> Result<BiasCertificate> {
    check_power(config.nu_power, "nu_power")?;
    let audit = run_audit(model, opt, &config.audit)?;
    let measured = measure(model, opt)?;

    let flags = ValidityFlags {
        nu_below_one: audit.nu_rho < 1.0,
        beta_below_one: audit.beta_m < 1.0,
        delta_below_half: audit.delta_r_star < 0.5,
        b_positive: audit.b_hat > 0.0,
    };
    let hat = hat_alpha_with(
        audit.nu_rho,
        config.nu_power,
        audit.alpha_m,
        audit.tau_m,
        audit.delta_2r_star,
        audit.r_star,
    )
    .unwrap_or(f64::INFINITY);
    let a4 = bound_a4_with(audit.nu_rho, config.nu_power, audit.beta_m).unwrap_or(f64::INFINITY);
    let a5 = bound_a5(audit.delta_r_star).unwrap_or(f64::INFINITY);
    let binding = flags.all();
    if !binding {
        info!("certificate is non-binding: {flags:?}");
    }
    Ok(BiasCertificate {
        r_star: audit.r_star,
        c_kappa_power: config.audit.c_kappa_power,
        inputs: audit,
        hat_alpha: hat,
        bound_a4: a4,
        bound_a5: a5,
        nu_power: config.nu_power,
        flags,
        binding,
        measured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn r_star_examples() {
        assert_relative_eq!(r_star(1.0, 4, 1.0, 1).unwrap(), 4.0);
        assert_relative_eq!(r_star(0.25, 16, 4.0, 1).unwrap(), 2.0);
        assert_eq!(r_star(0.0, 7, 1.0, 1).unwrap(), 0.0);
        assert_relative_eq!(r_star(0.5, 4, 1.0, 2).unwrap(), 2.0);
        assert!(r_star(1.0, 4, 0.0, 1).is_err());
    }

    #[test]
    fn hat_alpha_examples() {
        assert_relative_eq!(hat_alpha(0.0, 0.1, 0.05, 0.0, 1.0).unwrap(), 0.15, epsilon = 1e-15);
        let expected = (1.36f64 / 0.64).sqrt() * 0.14;
        assert_relative_eq!(hat_alpha(0.6, 0.1, 0.0, 0.01, 2.0).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(expected, 0.2040833, epsilon = 1e-7);
        assert_eq!(hat_alpha(0.0, 0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            hat_alpha(1.0, 0.1, 0.0, 0.0, 0.0),
            Err(Error::IdentifiabilityViolation(_))
        ));
    }

    #[test]
    fn bound_a4_examples() {
        assert_eq!(bound_a4(0.5, 0.0).unwrap(), 0.0);
        assert_relative_eq!(bound_a4(0.5, 0.1).unwrap(), 1.26 / 0.75 * 0.01 / 0.99, epsilon = 1e-15);
        assert_relative_eq!(bound_a4(0.5, 0.1).unwrap(), 0.0169697, epsilon = 1e-7);
        assert!(bound_a4(0.5, 1.0).is_err());
        assert!(bound_a4(1.0, 0.1).is_err());
    }

    #[test]
    fn bound_a5_examples() {
        assert_eq!(bound_a5(0.0).unwrap(), 0.0);
        assert_relative_eq!(bound_a5(0.25).unwrap(), 0.5);
        assert!(matches!(bound_a5(0.5), Err(Error::BoundInapplicable(_))));
    }

    #[test]
    fn decoupled_quadratic_certificate() {
        use crate::linalg::{Matrix, Vector};
        use crate::oracle::QuadraticContrast;
        let d2 = Matrix::from_row_slice(
            4,
            4,
            &[2.0, 0.4, 0.0, 0.0, 0.4, 1.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.2, 0.0, 0.0, 0.2, 1.0],
        );
        let q = QuadraticContrast::new(
            d2,
            Vector::from_vec(vec![0.3, -0.2, 1.0, 2.0]),
            SieveFrame::new(1, 1, 4).unwrap(),
        )
        .unwrap();
        let cert = assemble_certificate(&q, &CertificateConfig::default()).unwrap();
        assert!(cert.hat_alpha.abs() < 1e-12);
        assert!(cert.bound_a4.abs() < 1e-12);
        assert!(cert.binding);
    }
}
