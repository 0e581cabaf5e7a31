//! Optical-flow refinement networks built from scratch on a small NHWC
//! tensor library: layers with hand-written backward passes, a
//! normalized-endpoint-error loss, block matching for guide flow,
//! dataset loaders, and SGD training.

pub mod blockmatch;
mod element;
pub mod error;
pub mod graphs;
pub mod data;
pub mod layers;
pub mod loss;
pub mod tensor;
pub mod train;

pub use element::Element;
pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
