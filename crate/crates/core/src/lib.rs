//! Estimation of the cusp location `θ` in the small-noise diffusion
//!
//! ```text
//! dX_t = (a |X_t − θ|^κ + h(X_t)) dt + ε dW_t,   X_0 = x₀,  0 ≤ t ≤ T,
//! ```
//!
//! with `κ ∈ (0, 1/2)`. The crate simulates the model, computes the maximum
//! likelihood, Bayesian and minimum distance estimators, samples the
//! fractional-Brownian limit law of the normalized errors and runs Monte
//! Carlo experiments comparing the two.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod likelihood;
pub mod limit_law;
pub mod model;
pub mod noise;
pub mod path;
pub mod quadrature;
pub mod stats;

pub use error::{CuspError, Result};
pub use estimators::{bayes, mde, mle, EstimateResult, EstimatorKind, Prior, PriorKind};
pub use likelihood::{limit_constants, log_likelihood_ratio, normalized_curve, LimitConstants, LogLikelihoodCurve};
pub use limit_law::{sample_fbm, FbmSample, FbmSampler, LimitVariables};
pub use model::{CuspModel, HFunction};
pub use noise::NoiseStream;
pub use path::{Path, PathKind};
