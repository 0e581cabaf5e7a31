use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// 2x2 max pooling with stride 2.
///
/// Returns the pooled tensor and, per output element, the flat input offset
/// of the selected maximum. Ties go to the first position in row-major
/// window order.
pub fn maxpool_forward<T: Element>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, h, w, c] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "max pooling needs even height and width, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, oh, ow, c])?;
    let mut indices = vec![0usize; out.len()];
    let mut k = 0;
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                for ch in 0..c {
                    let mut best = input.offset([b, 2 * y, 2 * x, ch]);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let o = input.offset([b, 2 * y + dy, 2 * x + dx, ch]);
                        if input.data()[o] > input.data()[best] {
                            best = o;
                        }
                    }
                    out.data_mut()[k] = input.data()[best];
                    indices[k] = best;
                    k += 1;
                }
            }
        }
    }
    Ok((out, indices))
}

pub fn maxpool_backward<T: Element>(
    indices: &[usize],
    grad_output: &Tensor<T>,
    input_shape: Shape,
) -> Result<Tensor<T>> {
    let [n, h, w, c] = input_shape;
    if grad_output.shape() != [n, h / 2, w / 2, c] || indices.len() != grad_output.len() {
        return Err(Error::Shape(format!(
            "max pooling gradient {:?} does not match input {:?}",
            grad_output.shape(),
            input_shape
        )));
    }
    let mut grad = Tensor::zeros(input_shape)?;
    for (&i, &g) in indices.iter().zip(grad_output.data()) {
        let slot = grad
            .data_mut()
            .get_mut(i)
            .ok_or_else(|| Error::Shape(format!("argmax offset {i} out of range")))?;
        *slot = *slot + g;
    }
    Ok(grad)
}
