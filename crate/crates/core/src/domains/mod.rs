//! The three experiment domains.

use thiserror::Error;

use crate::mdp::MdpError;

pub mod diabetes;
pub mod maternal;
pub mod synthetic;

pub use diabetes::{build_diabetes, load_group_table, DiabetesSpec, DiabetesState};
pub use maternal::{build_maternal, MaternalSpec};
pub use synthetic::{build_synthetic, SyntheticSpec};

#[derive(Debug, Error)]
pub enum DomainError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("group fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("group {0} would have no arms")]
    EmptyGroup(usize),
    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("row {row}, column {column}: probability {value} is invalid")]
    BadProbability {
        row: usize,
        column: usize,
        value: f64,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("reading group table: {0}")]
    Io(#[from] std::io::Error),
}

/// Names of the domains the crate can build.
pub const DOMAIN_NAMES: [&str; 3] = ["synthetic", "maternal", "diabetes"];

/// Arms per group: `floor(frac · n)`, with the rounding residual added to group 0.
pub fn group_sizes(fracs: &[f64], n_arms: usize) -> Result<Vec<usize>, DomainError> {
    let sum: f64 = fracs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || fracs.iter().any(|f| *f < 0.0) {
        return Err(DomainError::FractionSum(sum));
    }
    let mut sizes: Vec<usize> = fracs
        .iter()
        .map(|f| (f * n_arms as f64 + 1e-9).floor() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    sizes[0] += n_arms - assigned.min(n_arms);
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(DomainError::EmptyGroup(g));
    }
    Ok(sizes)
}
