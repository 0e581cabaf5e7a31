use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stacks `a` and `b` along the channel axis, `a` first.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h, w, ca] = a.shape();
    if b.shape()[..3] != [n, h, w] {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} with {:?}: spatial size differs",
            a.shape(),
            b.shape()
        )));
    }
    let cb = b.c();
    let pixels = n * h * w;
    let mut data = Vec::with_capacity(pixels * (ca + cb));
    for p in 0..pixels {
        data.extend_from_slice(&a.data()[p * ca..(p + 1) * ca]);
        data.extend_from_slice(&b.data()[p * cb..(p + 1) * cb]);
    }
    Tensor::from_vec([n, h, w, ca + cb], data)
}

/// Splits a concatenated gradient into the parts for `a` (first `a_channels`) and `b`.
pub fn concat_backward<T: Element>(grad: &Tensor<T>, a_channels: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = grad.c();
    if a_channels > c {
        return Err(Error::Shape(format!(
            "split at channel {a_channels} of a {c}-channel gradient"
        )));
    }
    Ok((
        grad.slice_channels(0, a_channels)?,
        grad.slice_channels(a_channels, c)?,
    ))
}
