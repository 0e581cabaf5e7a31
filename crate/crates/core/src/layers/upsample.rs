use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// One output coordinate's two source taps along an axis.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    w_lo: f64,
    w_hi: f64,
}

/// Half-pixel-centre taps for doubling an axis of length `len`:
/// `src = (dst + 0.5) / 2 - 0.5`, clamped to `[0, len - 1]`.
fn taps(len: usize) -> Vec<Tap> {
    (0..2 * len)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            let frac = src - lo as f64;
            Tap {
                lo,
                hi,
                w_lo: 1.0 - frac,
                w_hi: frac,
            }
        })
        .collect()
}

/// Bilinear resize to twice the height and width.
pub fn bilinear_upsample_forward<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h, w, c] = input.shape();
    let mut out = Tensor::zeros([n, 2 * h, 2 * w, c])?;
    if out.is_empty() {
        return Ok(out);
    }
    let (ty, tx) = (taps(h), taps(w));
    let mut k = 0;
    for b in 0..n {
        for ry in &ty {
            for rx in &tx {
                let corners = [
                    (ry.lo, rx.lo, ry.w_lo * rx.w_lo),
                    (ry.lo, rx.hi, ry.w_lo * rx.w_hi),
                    (ry.hi, rx.lo, ry.w_hi * rx.w_lo),
                    (ry.hi, rx.hi, ry.w_hi * rx.w_hi),
                ];
                for ch in 0..c {
                    let mut acc = 0.0;
                    for &(y, x, wt) in &corners {
                        acc += wt * input.data()[input.offset([b, y, x, ch])].as_f64();
                    }
                    out.data_mut()[k] = T::of_f64(acc);
                    k += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Transpose of [`bilinear_upsample_forward`].
pub fn bilinear_upsample_backward<T: Element>(
    grad_output: &Tensor<T>,
    input_shape: Shape,
) -> Result<Tensor<T>> {
    let [n, h, w, c] = input_shape;
    if grad_output.shape() != [n, 2 * h, 2 * w, c] {
        return Err(Error::Shape(format!(
            "upsampling gradient {:?} does not match input {:?}",
            grad_output.shape(),
            input_shape
        )));
    }
    let mut acc = vec![0f64; n * h * w * c];
    if !acc.is_empty() {
        let (ty, tx) = (taps(h), taps(w));
        let mut k = 0;
        for b in 0..n {
            for ry in &ty {
                for rx in &tx {
                    let corners = [
                        (ry.lo, rx.lo, ry.w_lo * rx.w_lo),
                        (ry.lo, rx.hi, ry.w_lo * rx.w_hi),
                        (ry.hi, rx.lo, ry.w_hi * rx.w_lo),
                        (ry.hi, rx.hi, ry.w_hi * rx.w_hi),
                    ];
                    for ch in 0..c {
                        let g = grad_output.data()[k].as_f64();
                        for &(y, x, wt) in &corners {
                            acc[((b * h + y) * w + x) * c + ch] += wt * g;
                        }
                        k += 1;
                    }
                }
            }
        }
    }
    Tensor::from_vec(input_shape, acc.into_iter().map(T::of_f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f64>::full([2, 3, 5, 2], 1.25).unwrap();
        let y = bilinear_upsample_forward(&x).unwrap();
        assert_eq!(y.shape(), [2, 6, 10, 2]);
        assert!(y.data().iter().all(|&v| (v - 1.25).abs() < 1e-15));
    }

    #[test]
    fn single_pixel_replicates() {
        let x = Tensor::from_vec([1, 1, 1, 1], vec![7.0f32]).unwrap();
        assert_eq!(bilinear_upsample_forward(&x).unwrap().data(), &[7.0; 4]);
    }

    #[test]
    fn interior_weights_are_quarter_three_quarter() {
        // 1-D ramp along x: output x=1 sits at source 0.25, x=2 at 0.75
        let x = Tensor::from_vec([1, 1, 3, 1], vec![0.0f64, 4.0, 8.0]).unwrap();
        let y = bilinear_upsample_forward(&x).unwrap();
        assert_eq!(y.data()[..6], [0.0, 1.0, 3.0, 5.0, 7.0, 8.0]);
    }

    #[test]
    fn backward_is_matrix_transpose() {
        // Build the forward map column by column from basis inputs.
        let in_shape = [1, 3, 3, 1];
        let mut m = vec![vec![0.0; 9]; 36];
        for j in 0..9 {
            let mut e = vec![0.0f64; 9];
            e[j] = 1.0;
            let col = bilinear_upsample_forward(&Tensor::from_vec(in_shape, e).unwrap()).unwrap();
            for (i, v) in col.data().iter().enumerate() {
                m[i][j] = *v;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Tensor::<f64>::from_fn([1, 6, 6, 1], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let back = bilinear_upsample_backward(&g, in_shape).unwrap();
        for j in 0..9 {
            let want: f64 = (0..36).map(|i| m[i][j] * g.data()[i]).sum();
            assert!((back.data()[j] - want).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = Tensor::<f32>::zeros([1, 4, 4, 1]).unwrap();
        assert!(bilinear_upsample_backward(&g, [1, 3, 2, 1]).is_err());
    }
}
