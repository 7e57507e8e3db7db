//! Single-index regression `Y = f(Xᵀθ*) + ε` with a sieve for the link.

pub mod basis;
pub mod data;
pub mod estimator;
pub mod population;
pub mod rates;
pub mod wavelet;

pub use basis::{basis_eval, lebesgue_gram, BasisFamily, BasisSpec};
pub use data::{
    contrast_value, design, near_tight_coefficients, sample_dataset, Dataset, DensitySpec, SingleIndexTruth,
};
pub use estimator::{grid_initializer, profile_contrast, profile_fit, FitTrace, ProfileFit};
pub use population::{gauss_legendre, population_operator, population_operator_with, PopulationConfig, PopulationModel};
pub use rates::{log_log_slope, rate_row, rate_sweep, rate_sweep_with, RateConfig, RateReport, RateRow, RateSlopes};
