//! Non-Hermitian singular spectrum analysis: retrieval of complex
//! exponentials from a noisy series through a generalized eigenproblem on
//! lagged trajectory matrices, with per-component diagnostics, labelling and
//! reconstruction.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.

pub mod bench;
pub mod components;
pub mod embedding;
pub mod error;
pub mod esprit;
pub mod io;
pub mod linalg;
pub mod pencil;
pub mod pipeline;
pub mod reconstruction;
pub mod scalar;
pub mod signal;
#[cfg(test)]
mod testutil;

pub use error::{NhssaError, Result};

pub type Series = signal::ComplexSeries<f64>;
pub type Series32 = signal::ComplexSeries<f32>;
pub type Pencil = pencil::PencilDecomposition<f64>;
pub type Pencil32 = pencil::PencilDecomposition<f32>;
pub type Decomposition = pipeline::PipelineResult<f64>;
pub type Decomposition32 = pipeline::PipelineResult<f32>;
pub type Rebuilt = reconstruction::Reconstruction<f64>;
pub type Rebuilt32 = reconstruction::Reconstruction<f32>;
