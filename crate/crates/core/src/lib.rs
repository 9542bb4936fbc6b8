//! Optimization-bias theory for time series: closed-form bias calculators,
//! synthetic process generators, orthogonal transforms, harmonized losses,
//! orthogonality diagnostics and small training experiments.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod desk;
pub mod diagnostics;
pub mod eob;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod processes;
pub mod rng;
pub mod scalar;
pub mod transforms;

pub use error::{EobError, Result};
pub use scalar::Scalar;
pub use config::ExperimentConfig;

pub type ArSpec = processes::ArSpec<f64>;
pub type HybridSpec = processes::HybridSpec<f64>;
pub type CorrMatrix = eob::CorrMatrix<f64>;
pub type EobReport = eob::EobReport<f64>;
pub type Spectrum = transforms::Spectrum<f64>;
pub type Matrix = linalg::Matrix<f64>;

pub type ArSpecF32 = processes::ArSpec<f32>;
pub type SpectrumF32 = transforms::Spectrum<f32>;
