//! Simulator and analysis toolkit for thermodynamic diffusion inference on a
//! coupled encoder/decoder Langevin substrate.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod data_io;
pub mod error;
pub mod harness;
pub mod langevin;
pub mod linalg;
pub mod rng;
pub mod substrate;

pub use error::{Error, Result};
pub use linalg::Matrix;
