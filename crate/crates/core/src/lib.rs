//! Co-impact of simultaneous metaorders.
//!
//! The crate covers the full chain from reported executions to calibrated
//! impact curves:
//!
//! - [`domain`]: metaorder records, filters, price rescaling, day panels and
//!   their CSV formats.
//! - [`impact_law`]: the square-root law and the (α, δ) aggregation ansatz.
//! - [`gaussian`]: closed-form impact curves for Gaussian and stable volumes.
//! - [`sim`]: the hidden-factor sign model, Monte Carlo impact and a
//!   synthetic market generator.
//! - [`estimators`]: binned curves, sign correlations, Herfindahl index and
//!   tail fits.
//! - [`calibration`]: grid search, GMM inversion and the model-vs-data
//!   comparison.
//!
//! The deterministic math is generic over [`Scalar`]; the `*F64` aliases
//! below name the usual instantiation.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod calibration;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod impact_law;
pub mod scalar;
pub mod sim;
pub mod specfun;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type AnsatzParamsF64 = impact_law::AnsatzParams<f64>;
pub type GaussianPanelModelF64 = gaussian::GaussianPanelModel<f64>;
pub type GaussianCouplingsF64 = gaussian::GaussianCouplings<f64>;
pub type GaussianMomentsF64 = gaussian::GaussianMoments<f64>;
pub type EigenTripleF64 = gaussian::EigenTriple<f64>;
