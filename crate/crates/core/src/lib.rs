pub mod analysis;
pub mod blocks;
pub mod data;
pub mod error;
pub mod fft;
pub mod kv;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod par;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{no_grad, Conv2dSpec, DType, Element, Tensor};
