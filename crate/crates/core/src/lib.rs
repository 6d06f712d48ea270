//! Count models for mass event histories: a latent Weibull lead time followed by
//! logistic per-agent action times, with logistic-regression baselines,
//! likelihood evaluation by quadrature, maximum likelihood fitting, simulation
//! and ensemble diagnostics.

pub mod analysis;
pub mod error;
pub mod estimation;
pub mod likelihood;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod simulation;

pub use error::{Error, Result};
pub use estimation::{fit_model, FitConfig};
pub use model::{CountDataset, FitResult, ModelKind, ReParams, SsbParams, Trajectory};
pub use quadrature::QuadConfig;
