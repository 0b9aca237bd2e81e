pub mod artifact;
pub mod cli;
pub mod data;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod nn;
pub mod reduce;
pub mod seed;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor3;
