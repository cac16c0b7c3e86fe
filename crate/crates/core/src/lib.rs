//! Posit-arithmetic neural network training and inference.

pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod posit;
pub mod quire;
pub mod tensor;

pub use error::{Error, Result};
pub use posit::{PositConfig, PositValue};
