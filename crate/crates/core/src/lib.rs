//! Spectral laboratory for shifted random matrices `M + N`.
//!
//! The crate estimates least singular values and condition numbers of a
//! fixed matrix plus iid noise, reproduces the adversarial shift showing that
//! the norm of `M` enters the tail bound, and computes small-ball
//! (Littlewood-Offord) probabilities exactly, by Monte Carlo, and through
//! a Fourier-analytic upper bound.

pub mod constructions;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod small_ball;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision matrix used throughout the experiments.
pub type Matrix = linalg::DenseMatrix<f64>;
/// Single-precision matrix.
pub type MatrixF32 = linalg::DenseMatrix<f32>;
pub type Svd = linalg::Svd<f64>;
pub type SpectralSummary = linalg::SpectralSummary<f64>;
pub type NormEstimate = linalg::NormEstimate<f64>;
pub type RowDistance = linalg::RowDistance<f64>;
