//! Energy benchmarking of image classifiers over an experiment matrix, and
//! regression models that predict the energy of unseen configurations.
//!
//! Numeric code in [`predictor`] and [`metrics`] is generic over
//! [`Scalar`]; the aliases below fix it to `f64`.

pub mod classifiers;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod metering;
pub mod metrics;
pub mod predictor;
pub mod report;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = predictor::Matrix<f64>;
pub type LinearModel = predictor::LinearModel<f64>;
pub type GpModel = predictor::GpModel<f64>;
pub type GpParams = predictor::GpParams<f64>;
pub type Forest = predictor::Forest<f64>;
pub type FittedModel = predictor::FittedModel<f64>;
pub type ModelSpec = predictor::ModelSpec<f64>;
pub type Metrics = metrics::Metrics<f64>;
