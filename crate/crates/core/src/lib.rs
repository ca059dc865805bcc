//! Time-modulated LSTM cells, a small image encoder, a synthetic sequence
//! simulator and the training and evaluation code around them.
//!
//! Numeric building blocks are generic over [`Scalar`] (`f32` or `f64`);
//! training, checkpoints and reports use `f64`.

pub mod cells;
pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type VectorF64 = linalg::Vector<f64>;
pub type VectorF32 = linalg::Vector<f32>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type CellParametersF64 = cells::CellParameters<f64>;
pub type CellParametersF32 = cells::CellParameters<f32>;
pub type EncoderParametersF64 = encoder::EncoderParameters<f64>;
pub type EncoderParametersF32 = encoder::EncoderParameters<f32>;
