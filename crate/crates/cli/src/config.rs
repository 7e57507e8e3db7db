//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sieve_lab::audit::AuditConfig;
use sieve_lab::certificate::CertificateConfig;
use sieve_lab::linalg::SieveFrame;
use sieve_lab::single_index::{
    near_tight_coefficients, BasisFamily, DensitySpec, PopulationConfig, RateConfig, SingleIndexTruth,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Audit,
    Certify,
    Simulate,
    Rates,
    VerifyBounds,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Audit => "audit",
            Mode::Certify => "certify",
            Mode::Simulate => "simulate",
            Mode::Rates => "rates",
            Mode::VerifyBounds => "verify-bounds",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub p: usize,
    pub p1: usize,
    pub p_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Quadratic,
    Quartic,
    SingleIndex,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Number of random oracle instances.
    #[serde(default = "one")]
    pub instances: usize,
    /// Quartic amplitude.
    #[serde(default)]
    pub eps: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub theta_star: Vec<f64>,
    pub smoothness: f64,
    pub sigma: f64,
    #[serde(default = "unit")]
    pub s_x: f64,
    /// Explicit coefficients; when absent `coefficients` of the near-tight family are used.
    #[serde(default)]
    pub f_coeffs: Option<Vec<f64>>,
    #[serde(default)]
    pub coefficients: Option<usize>,
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default = "unit")]
    pub density_exponent: f64,
    #[serde(default = "cosine")]
    pub basis: BasisFamily,
}

fn unit() -> f64 {
    1.0
}

fn cosine() -> BasisFamily {
    BasisFamily::Cosine
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub delta_samples: usize,
    pub b_samples: usize,
    pub lambda_grid_size: usize,
    pub b_r_min: f64,
    pub b_r_max: f64,
    pub delta_radii: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let a = AuditConfig::default();
        Self {
            delta_samples: a.delta_samples,
            b_samples: a.b_samples,
            lambda_grid_size: a.lambda_grid_size,
            b_r_min: a.b_r_min,
            b_r_max: a.b_r_max,
            delta_radii: a.delta_radii,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConventionConfig {
    pub nu_power: u8,
    pub c_kappa_power: u8,
}

impl Default for ConventionConfig {
    fn default() -> Self {
        Self {
            nu_power: 2,
            c_kappa_power: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSection {
    pub n: f64,
    pub angle_nodes: usize,
    pub chord_nodes: usize,
    pub check_quadrature: bool,
}

impl Default for PopulationSection {
    fn default() -> Self {
        let p = PopulationConfig::default();
        Self {
            n: p.n,
            angle_nodes: p.angle_nodes,
            chord_nodes: p.chord_nodes,
            check_quadrature: p.check_quadrature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Best point of an angular grid.
    Grid,
    /// The true direction.
    Truth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub replicates: usize,
    pub m: usize,
    #[serde(default = "grid")]
    pub init: InitKind,
    #[serde(default = "grid_points")]
    pub grid_points: usize,
    /// Replicates with `‖θ̃ − θ*‖` at most this count as successes.
    #[serde(default = "success_radius")]
    pub success_radius: f64,
}

fn grid() -> InitKind {
    InitKind::Grid
}

fn grid_points() -> usize {
    64
}

fn success_radius() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub m_list: Vec<usize>,
    pub p_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plots: true,
        }
    }
}

/// A parsed experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    pub seed: u64,
    #[serde(default)]
    pub frame: Option<FrameConfig>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub truth: Option<TruthConfig>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub conventions: ConventionConfig,
    #[serde(default)]
    pub population: PopulationSection,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub rates: Option<RatesConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Raw file contents and the parsed configuration.
pub struct Loaded {
    pub text: String,
    pub config: ExperimentConfig,
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let config = parse(&text).map_err(|message| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    })?;
    Ok(Loaded { text, config })
}

/// Parses TOML; the error message carries the line and the offending field.
pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}: {msg}")
            }
            None => msg,
        }
    })
}

impl ExperimentConfig {
    /// Checks the sections that `mode` needs.
    pub fn validate(&self, mode: Mode) -> Result<(), ConfigError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(invalid(
                    "mode",
                    format!("config is for `{}`, command is `{}`", m.name(), mode.name()),
                ));
            }
        }
        for (v, name) in [
            (self.conventions.nu_power, "conventions.nu_power"),
            (self.conventions.c_kappa_power, "conventions.c_kappa_power"),
        ] {
            if v != 1 && v != 2 {
                return Err(invalid(name, format!("must be 1 or 2, got {v}")));
            }
        }
        let s = &self.sampling;
        if s.delta_samples == 0 || s.b_samples == 0 {
            return Err(invalid("sampling", "sample counts must be >= 1"));
        }
        if s.lambda_grid_size < 2 {
            return Err(invalid("sampling.lambda_grid_size", "must be >= 2"));
        }
        if !(s.b_r_min > 0.0 && s.b_r_max >= s.b_r_min) {
            return Err(invalid("sampling.b_r_min", "need 0 < b_r_min <= b_r_max"));
        }
        match mode {
            Mode::Audit | Mode::Certify | Mode::VerifyBounds => {
                self.frame()?;
                let model = self.model()?;
                if model.kind == ModelKind::SingleIndex {
                    if mode == Mode::VerifyBounds {
                        return Err(invalid("model.kind", "verify-bounds needs an oracle model"));
                    }
                    let frame = self.frame()?;
                    if frame.p != 1 {
                        return Err(invalid("frame.p", "the single-index chart has p = 1"));
                    }
                    self.truth()?;
                } else {
                    if model.instances == 0 {
                        return Err(invalid("model.instances", "must be >= 1"));
                    }
                    if model.kind == ModelKind::Quartic && !(model.eps >= 0.0) {
                        return Err(invalid("model.eps", "must be >= 0"));
                    }
                }
            }
            Mode::Simulate => {
                self.truth()?;
                let sim = self.simulate.as_ref().ok_or_else(|| invalid("simulate", "missing section"))?;
                if sim.n == 0 || sim.replicates == 0 || sim.m == 0 {
                    return Err(invalid("simulate", "n, replicates and m must be >= 1"));
                }
            }
            Mode::Rates => {
                self.truth()?;
                let r = self.rates.as_ref().ok_or_else(|| invalid("rates", "missing section"))?;
                if r.m_list.is_empty() {
                    return Err(invalid("rates.m_list", "must not be empty"));
                }
                if r.m_list.iter().any(|&m| m == 0 || m + 1 >= r.p_max) {
                    return Err(invalid("rates.m_list", "need 1 <= m < p_max - 1"));
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self) -> Result<SieveFrame, ConfigError> {
        let f = self.frame.as_ref().ok_or_else(|| invalid("frame", "missing section"))?;
        SieveFrame::new(f.p, f.p1, f.p_max).map_err(|e| invalid("frame", e.to_string()))
    }

    pub fn model(&self) -> Result<&ModelConfig, ConfigError> {
        self.model.as_ref().ok_or_else(|| invalid("model", "missing section"))
    }

    pub fn truth(&self) -> Result<SingleIndexTruth, ConfigError> {
        let t = self.truth.as_ref().ok_or_else(|| invalid("truth", "missing section"))?;
        let f_coeffs = match (&t.f_coeffs, t.coefficients) {
            (Some(c), None) => c.clone(),
            (None, Some(count)) => near_tight_coefficients(t.smoothness, count, t.amplitude),
            _ => return Err(invalid("truth.f_coeffs", "give exactly one of `f_coeffs` and `coefficients`")),
        };
        let truth = SingleIndexTruth {
            theta_star: t.theta_star.clone(),
            f_coeffs,
            smoothness: t.smoothness,
            sigma: t.sigma,
            s_x: t.s_x,
            density: DensitySpec {
                exponent: t.density_exponent,
            },
            basis: t.basis,
        };
        truth.validate().map_err(|e| invalid("truth", e.to_string()))?;
        Ok(truth)
    }

    pub fn audit_config(&self, seed: u64) -> AuditConfig {
        let s = &self.sampling;
        AuditConfig {
            delta_samples: s.delta_samples,
            b_samples: s.b_samples,
            seed,
            lambda_grid_size: s.lambda_grid_size,
            b_r_min: s.b_r_min,
            b_r_max: s.b_r_max,
            delta_radii: s.delta_radii,
            c_kappa_power: self.conventions.c_kappa_power,
        }
    }

    pub fn certificate_config(&self, seed: u64) -> CertificateConfig {
        CertificateConfig {
            audit: self.audit_config(seed),
            nu_power: self.conventions.nu_power,
        }
    }

    pub fn population_config(&self) -> PopulationConfig {
        let p = &self.population;
        PopulationConfig {
            n: p.n,
            angle_nodes: p.angle_nodes,
            chord_nodes: p.chord_nodes,
            check_quadrature: p.check_quadrature,
            ..PopulationConfig::default()
        }
    }

    pub fn rate_config(&self) -> RateConfig {
        RateConfig {
            population: self.population_config(),
            lambda_grid_size: self.sampling.lambda_grid_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = r#"
seed = 3
[frame]
p = 1
p1 = 2
p_max = 6
[model]
kind = "quadratic"
instances = 4
"#;

    #[test]
    fn parses_minimal_oracle_config() {
        let c = parse(QUAD).unwrap();
        c.validate(Mode::Certify).unwrap();
        assert_eq!(c.frame().unwrap().p_star(), 3);
        assert_eq!(c.conventions.nu_power, 2);
    }

    #[test]
    fn missing_field_is_named_with_line() {
        let text = QUAD.replace("p1 = 2\n", "");
        let err = parse(&text).unwrap_err();
        assert!(err.contains("p1") && err.starts_with("line "), "{err}");
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let text = format!("mode = \"rates\"\n{QUAD}");
        let c = parse(&text).unwrap();
        assert!(matches!(c.validate(Mode::Certify), Err(ConfigError::Invalid { field, .. }) if field == "mode"));
    }

    #[test]
    fn unknown_field_is_rejected() {
        assert!(parse(&format!("{QUAD}colour = 1\n")).unwrap_err().contains("colour"));
    }
}
