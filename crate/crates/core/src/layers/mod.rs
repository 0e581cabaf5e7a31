//! Forward and backward passes for every block the two networks use.
//!
//! Each backward function is a pure function of the forward inputs, the
//! parameters and the upstream gradient; nothing is cached inside a layer.

mod batchnorm;
mod concat;
mod conv;
mod pool;
mod relu;
mod upsample;

pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_inference, BatchNormGrads, BatchNormParams,
    BN_EPSILON, BN_MOMENTUM,
};
pub use concat::{concat_backward, concat_channels};
pub use conv::{conv_backward, conv_forward, ConvParams, KERNEL, PAD};
pub use pool::{maxpool_backward, maxpool_forward};
pub use relu::{relu_backward, relu_forward};
pub use upsample::{bilinear_upsample_backward, bilinear_upsample_forward};

use crate::tensor::Tensor;

/// Whether batch normalization uses batch statistics or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Gradient of a layer with respect to its input and its parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads<G, T = f32> {
    pub grad_input: Tensor<T>,
    pub grad_params: G,
}
