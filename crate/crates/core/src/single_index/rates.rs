//! Sieve-dimension sweeps of the bias quantities for the single-index model.

use serde::Serialize;

use super::basis::BasisSpec;
use super::data::SingleIndexTruth;
use super::population::{population_operator_with, PopulationConfig, PopulationModel};
use crate::audit::{alpha_of_m, beta_of_m, cross_term, fmt_f, h_kappa_sq, lambda_grid, tau_of_m};
use crate::contrast::{ContrastModel, OptimumPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RateConfig {
    pub population: PopulationConfig,
    pub lambda_grid_size: usize,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            population: PopulationConfig::default(),
            lambda_grid_size: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub m: usize,
    pub alpha_m: f64,
    pub beta_m: f64,
    pub tau_m: f64,
    /// `‖H κ*‖²`.
    pub hkappa_sq: f64,
    pub cross_term_max: f64,
}

/// Least-squares slopes of `log quantity` against `log m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSlopes {
    pub alpha: f64,
    pub beta: f64,
    /// `None` when every `τ(m)` is at rounding level (at most `1e-8·n`).
    pub tau: Option<f64>,
    pub hkappa_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub smoothness: f64,
    pub n: f64,
    pub p_max: usize,
    pub rows: Vec<RateRow>,
    pub slopes: RateSlopes,
}

impl RateReport {
    pub const CSV_HEADER: &'static str = "m,alpha_m,beta_m,tau_m,hkappa_sq,cross_term_max";
    pub const SLOPES_HEADER: &'static str = "quantity,slope,expected";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.m,
                fmt_f(r.alpha_m),
                fmt_f(r.beta_m),
                fmt_f(r.tau_m),
                fmt_f(r.hkappa_sq),
                fmt_f(r.cross_term_max)
            ));
        }
        out
    }

    /// Fitted slopes next to the exponents `−(a+1/2)`, `−1/2`, `−2a+1`, `−2a`.
    pub fn slopes_csv(&self) -> String {
        let a = self.smoothness;
        let tau = self.slopes.tau.map_or_else(|| "nan".to_string(), fmt_f);
        let mut out = String::from(Self::SLOPES_HEADER);
        out.push('\n');
        out.push_str(&format!("alpha_m,{},{}\n", fmt_f(self.slopes.alpha), fmt_f(-(a + 0.5))));
        out.push_str(&format!("beta_m,{},{}\n", fmt_f(self.slopes.beta), fmt_f(-0.5)));
        out.push_str(&format!("tau_m,{},{}\n", tau, fmt_f(-2.0 * a + 1.0)));
        out.push_str(&format!("hkappa_sq,{},{}\n", fmt_f(self.slopes.hkappa_sq), fmt_f(-2.0 * a)));
        out
    }
}

/// Least-squares slope of `ln y` on `ln x` over the pairs with `y > 0`;
/// NaN when fewer than two such pairs exist.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

/// Rate quantities of one sieve dimension. Only `υ*` enters them, so the
/// pair carries `Π υ*` in place of the sieve optimum.
pub fn rate_row(model: &PopulationModel, grid: &[f64]) -> Result<RateRow> {
    let frame = model.frame();
    let star = model.ups_star();
    let opt = OptimumPair::new(&frame, star.clone(), frame.embed(&frame.project_sieve(&star)))?;
    Ok(RateRow {
        m: frame.p1,
        alpha_m: alpha_of_m(model, &opt)?,
        beta_m: beta_of_m(model, &opt)?,
        tau_m: tau_of_m(model, &opt, grid)?,
        hkappa_sq: h_kappa_sq(model, &opt)?,
        cross_term_max: cross_term(model, &opt, grid)?,
    })
}

pub fn rate_sweep(truth: &SingleIndexTruth, m_list: &[usize], p_max: usize) -> Result<RateReport> {
    rate_sweep_with(truth, m_list, p_max, &RateConfig::default())
}

pub fn rate_sweep_with(
    truth: &SingleIndexTruth,
    m_list: &[usize],
    p_max: usize,
    config: &RateConfig,
) -> Result<RateReport> {
    if m_list.is_empty() {
        return Err(Error::InvalidInput("m_list is empty".into()));
    }
    let largest = *m_list.iter().max().unwrap_or(&0);
    if largest + 1 >= p_max {
        return Err(Error::InvalidInput(format!(
            "P_max = {p_max} leaves no tail for m = {largest}"
        )));
    }
    let spec = BasisSpec::new(truth.basis, m_list[0], truth.s_x)?;
    let base = population_operator_with(truth, &spec, p_max, &config.population)?;
    let grid = lambda_grid(config.lambda_grid_size);
    let rows = m_list
        .iter()
        .map(|&m| rate_row(&base.with_sieve_dim(m)?, &grid))
        .collect::<Result<Vec<_>>>()?;

    let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let col = |f: fn(&RateRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let taus = col(|r| r.tau_m);
    let n = base.n();
    let tau = if taus.iter().any(|t| *t > 1e-8 * n) {
        Some(log_log_slope(&ms, &taus))
    } else {
        None
    };
    let slopes = RateSlopes {
        alpha: log_log_slope(&ms, &col(|r| r.alpha_m)),
        beta: log_log_slope(&ms, &col(|r| r.beta_m)),
        tau,
        hkappa_sq: log_log_slope(&ms, &col(|r| r.hkappa_sq)),
    };
    Ok(RateReport {
        smoothness: truth.smoothness,
        n,
        p_max,
        rows,
        slopes,
    })
}
