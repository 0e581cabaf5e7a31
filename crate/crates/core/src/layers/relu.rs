use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the input is strictly positive; zero at the kink.
pub fn relu_backward<T: Element>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_output.shape() {
        return Err(Error::Shape(format!(
            "relu gradient {:?} does not match input {:?}",
            grad_output.shape(),
            input.shape()
        )));
    }
    input.map_binary(grad_output, |x, g| if x > T::zero() { g } else { T::zero() })
}
