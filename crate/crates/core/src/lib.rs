//! Automated identification of bulk invertebrate samples from multi-view
//! image sequences: frame processing, per-image classification,
//! specimen-level aggregation, the evaluation protocol, biomass regression,
//! a device simulator and a synthetic cohort generator.
//!
//! Numeric building blocks are generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix them to `f64`, which is what the pipeline uses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregate;
pub mod biomass;
pub mod classify;
pub mod confidence;
pub mod dataset;
pub mod devicesim;
pub mod error;
pub mod eval;
pub mod imgproc;
pub mod manifest;
pub mod raster;
pub mod scalar;
pub mod seed;
pub mod syndata;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Confidence = confidence::ConfidenceVector<f64>;
pub type Model = classify::BaselineModel<f64>;
pub type Linear = classify::LinearSoftmax<f64>;
pub type Fit = biomass::RegressionFit<f64>;
