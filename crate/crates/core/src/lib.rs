//! Maximum-likelihood fitting of von Bertalanffy growth curves under
//! heteroscedastic scale-mixture-of-skew-normal errors (normal, skew-normal,
//! Student-t, skew-t), with local-influence diagnostics.
//!
//! Parameters are ordered `(L∞, K, t0, σ², ρ, λ)` throughout; ν is fixed
//! per fit and selected by profiling over a grid.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod family;
pub mod io;
pub mod model;
mod optim;
pub mod report;
pub mod smsn;
pub mod special;

pub use diagnostics::{CurvatureMode, InfluenceReport, RCReport};
pub use error::{Error, Result};
pub use estimator::{BandPoint, FitConfig, FitResult, FixedParams, ProfileResult};
pub use family::{Family, ModelSpec};
pub use model::{GrowthDataset, Param, ThetaVB};
pub use optim::Termination;
pub use report::{RunConfig, RunReport};
pub use smsn::{MixMoments, SkewNormalParams, SkewTParams};
