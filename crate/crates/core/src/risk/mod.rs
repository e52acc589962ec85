//! Model-uncertainty layer: Location-Scatter priors, Wasserstein
//! barycenters, and the harvest risk measure built on them.

mod measure;
mod model;
mod sampler;

use thiserror::Error;

use crate::control::ControlError;

pub use measure::{
    allocate_risk, allocations, assess, integral_adjoint, integral_adjoint_with_route,
    loss_distribution, risk_coefficients, robust_model, robust_policy, total_risk,
    IntegralRoute, PolicySampler, RiskCoefficients, RiskPreferences, RiskReport, RobustPolicy,
};
pub use model::{
    barycenter, barycenter_residual, frechet_function, frechet_variance, wasserstein2_distance,
    Barycenter, BarycenterOptions, LocationScatterModel, PriorContext, PriorSet, WEIGHT_TOL,
};
pub use sampler::GaussianSampler;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model contains non-finite entries")]
    NonFinite,
    #[error("scatter matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("scatter matrix is not positive semidefinite (eigenvalue {0:e})")]
    NonPsd(f64),
    #[error("prior set is empty")]
    EmptyPriorSet,
    #[error("prior weights: {0}")]
    BadWeights(String),
    #[error("barycenter iteration did not converge in {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("barycenter iterate {iteration} is singular")]
    SingularIterate { iteration: usize },
    #[error("gamma must be a positive number, got {0}")]
    InvalidGamma(f64),
    #[error("horizon must be non-negative, got {0}")]
    InvalidHorizon(f64),
    #[error("region {region} is outside 0..{n}")]
    RegionOutOfRange { region: usize, n: usize },
}
