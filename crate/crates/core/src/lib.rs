//! Sieve profile contrast estimation with auditing of the sieve bias.
//!
//! * [`linalg`]: partitioned symmetric operators, profile matrices, norms.
//! * [`contrast`]: the contrast contract and its full and sieve maximizers.
//! * [`audit`]: estimates of the scalars entering the bias conditions.
//! * [`certificate`]: closed-form bias bounds and their assembly.
//! * [`oracle`]: quadratic and quartic contrasts with closed-form answers.
//! * [`single_index`]: the single-index regression model.

pub mod audit;
pub mod certificate;
pub mod contrast;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod single_index;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
