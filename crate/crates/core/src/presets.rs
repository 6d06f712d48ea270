//! Bundled datasets and reference parameter values.

use crate::error::Result;
use crate::model::{CountDataset, SsbParams};

/// Counts of *S. feltiae* juveniles invading *G. mellonella* larvae, nine exposure
/// durations by ten replicate hosts, one host missing at 10 hours.
pub const FELTIAE_MELLONELLA_CSV: &str = include_str!("../data/feltiae_mellonella.csv");

/// Agent mass used in the exposure experiments.
pub const EXPERIMENT_MASS: u32 = 300;

pub fn feltiae_mellonella() -> CountDataset {
    CountDataset::from_csv(FELTIAE_MELLONELLA_CSV, EXPERIMENT_MASS).expect("bundled dataset parses")
}

/// Reference parameters `(alpha, beta, lambda, gamma) = (-3, 0.15, 4, 1.5)` for simulation studies.
pub fn reference_theta() -> Result<SsbParams> {
    SsbParams::ssb(-3.0, 0.15, 4.0, 1.5)
}
