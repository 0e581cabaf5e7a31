use rand::Rng;

use super::LayerGrads;
use crate::element::{gemm, Element, MatRef};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spatial size of every convolution kernel.
pub const KERNEL: usize = 5;
/// Zero padding on each border; keeps output size equal to input size.
pub const PAD: usize = 2;

/// Upper bound on the im2col scratch buffer, in elements.
const COLS_BUDGET: usize = 1 << 21;

/// Weights of a stride-1, 5x5, zero-padded convolution.
///
/// `weights` has shape `(5, 5, c_in, c_out)`, which read row-major is the
/// `(25 * c_in) x c_out` matrix multiplied against im2col patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Element> ConvParams<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Result<Self> {
        Ok(ConvParams {
            weights: Tensor::zeros([KERNEL, KERNEL, c_in, c_out])?,
            bias: vec![T::zero(); c_out],
        })
    }

    /// Uniform fan-in initialisation in `[-s, s]`, `s = sqrt(2 / (25 * c_in))`; zero bias.
    pub fn init(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(c_in, c_out)?;
        let scale = (2.0 / (KERNEL * KERNEL * c_in.max(1)) as f64).sqrt();
        for w in p.weights.data_mut() {
            *w = T::of_f64(rng.gen_range(-scale..scale));
        }
        Ok(p)
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[3]
    }

    pub fn cast<U: Element>(&self) -> ConvParams<U> {
        ConvParams {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|b| U::of_f64(b.as_f64())).collect(),
        }
    }
}

fn rows_per_chunk(h: usize, w: usize, k: usize, budget: usize) -> usize {
    (budget / (w * k).max(1)).clamp(1, h.max(1))
}

/// Fills `cols` with the zero-padded 5x5 patches of output rows `y0..y1`.
fn im2col<T: Element>(img: &[T], h: usize, w: usize, c: usize, y0: usize, y1: usize, cols: &mut [T]) {
    let k = KERNEL * KERNEL * c;
    for y in y0..y1 {
        for x in 0..w {
            let row = &mut cols[((y - y0) * w + x) * k..][..k];
            for ky in 0..KERNEL {
                let seg = &mut row[ky * KERNEL * c..(ky + 1) * KERNEL * c];
                let iy = y as isize + ky as isize - PAD as isize;
                if iy < 0 || iy >= h as isize {
                    seg.fill(T::zero());
                    continue;
                }
                for kx in 0..KERNEL {
                    let dst = &mut seg[kx * c..(kx + 1) * c];
                    let ix = x as isize + kx as isize - PAD as isize;
                    if ix < 0 || ix >= w as isize {
                        dst.fill(T::zero());
                    } else {
                        let src = (iy as usize * w + ix as usize) * c;
                        dst.copy_from_slice(&img[src..src + c]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back onto the image.
fn col2im<T: Element>(cols: &[T], h: usize, w: usize, c: usize, y0: usize, y1: usize, img: &mut [T]) {
    let k = KERNEL * KERNEL * c;
    for y in y0..y1 {
        for x in 0..w {
            let row = &cols[((y - y0) * w + x) * k..][..k];
            for ky in 0..KERNEL {
                let iy = y as isize + ky as isize - PAD as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = x as isize + kx as isize - PAD as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = (iy as usize * w + ix as usize) * c;
                    let src = (ky * KERNEL + kx) * c;
                    for (d, &s) in img[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}

fn check_input<T: Element>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<()> {
    if input.c() != p.c_in() {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, got {}",
            p.c_in(),
            input.c()
        )));
    }
    if p.bias.len() != p.c_out() {
        return Err(Error::Shape(format!(
            "bias has {} entries for {} output channels",
            p.bias.len(),
            p.c_out()
        )));
    }
    Ok(())
}

pub fn conv_forward<T: Element>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    forward_with_budget(input, p, COLS_BUDGET)
}

fn forward_with_budget<T: Element>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    budget: usize,
) -> Result<Tensor<T>> {
    check_input(input, p)?;
    let [n, h, w, c_in] = input.shape();
    let c_out = p.c_out();
    let k = KERNEL * KERNEL * c_in;
    let mut out = Tensor::zeros([n, h, w, c_out])?;
    if out.is_empty() {
        return Ok(out);
    }
    for px in out.data_mut().chunks_exact_mut(c_out) {
        px.copy_from_slice(&p.bias);
    }
    let chunk = rows_per_chunk(h, w, k, budget);
    let mut cols = vec![T::zero(); chunk * w * k];
    let weights = MatRef::row_major(p.weights.data(), k, c_out);
    for b in 0..n {
        let img = input.item(b);
        for y0 in (0..h).step_by(chunk) {
            let y1 = (y0 + chunk).min(h);
            let m = (y1 - y0) * w;
            im2col(img, h, w, c_in, y0, y1, &mut cols[..m * k]);
            let dst = &mut out.item_mut(b)[y0 * w * c_out..y1 * w * c_out];
            gemm(MatRef::row_major(&cols[..m * k], m, k), weights, T::one(), dst);
        }
    }
    Ok(out)
}

pub fn conv_backward<T: Element>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    grad_output: &Tensor<T>,
) -> Result<LayerGrads<ConvParams<T>, T>> {
    check_input(input, p)?;
    let [n, h, w, c_in] = input.shape();
    let c_out = p.c_out();
    if grad_output.shape() != [n, h, w, c_out] {
        return Err(Error::Shape(format!(
            "convolution output gradient {:?} does not match output shape {:?}",
            grad_output.shape(),
            [n, h, w, c_out]
        )));
    }
    let k = KERNEL * KERNEL * c_in;
    let mut grad_input = Tensor::zeros(input.shape())?;
    let mut grad_params = ConvParams::zeros(c_in, c_out)?;
    let mut bias_acc = vec![0f64; c_out];
    if input.is_empty() {
        return Ok(LayerGrads {
            grad_input,
            grad_params,
        });
    }
    let chunk = rows_per_chunk(h, w, k, COLS_BUDGET);
    let mut cols = vec![T::zero(); chunk * w * k];
    let mut grad_cols = vec![T::zero(); chunk * w * k];
    let weights = MatRef::row_major(p.weights.data(), k, c_out);
    for b in 0..n {
        for y0 in (0..h).step_by(chunk) {
            let y1 = (y0 + chunk).min(h);
            let m = (y1 - y0) * w;
            let gout = &grad_output.item(b)[y0 * w * c_out..y1 * w * c_out];
            for px in gout.chunks_exact(c_out) {
                for (acc, g) in bias_acc.iter_mut().zip(px) {
                    *acc += g.as_f64();
                }
            }
            im2col(input.item(b), h, w, c_in, y0, y1, &mut cols[..m * k]);
            let gout_m = MatRef::row_major(gout, m, c_out);
            gemm(
                MatRef::row_major(&cols[..m * k], m, k).t(),
                gout_m,
                T::one(),
                grad_params.weights.data_mut(),
            );
            gemm(gout_m, weights.t(), T::zero(), &mut grad_cols[..m * k]);
            col2im(&grad_cols[..m * k], h, w, c_in, y0, y1, grad_input.item_mut(b));
        }
    }
    grad_params.bias = bias_acc.into_iter().map(T::of_f64).collect();
    Ok(LayerGrads {
        grad_input,
        grad_params,
    })
}
