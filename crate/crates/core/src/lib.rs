pub mod bdrate;
pub mod bench;
pub mod error;
pub mod media;
pub mod metrics;
pub mod models;
pub mod score;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
