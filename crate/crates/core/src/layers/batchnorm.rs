use super::{LayerGrads, Mode};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization state.
///
/// Statistics are taken over `(n, h, w)`. Running statistics follow an
/// exponential moving average with weight `momentum` on the new batch, and
/// store the biased batch variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    pub momentum: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Element> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: T::of_f64(BN_EPSILON),
            momentum: T::of_f64(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn cast<U: Element>(&self) -> BatchNormParams<U> {
        let c = |v: &[T]| v.iter().map(|x| U::of_f64(x.as_f64())).collect();
        BatchNormParams {
            gamma: c(&self.gamma),
            beta: c(&self.beta),
            running_mean: c(&self.running_mean),
            running_var: c(&self.running_var),
            epsilon: U::of_f64(self.epsilon.as_f64()),
            momentum: U::of_f64(self.momentum.as_f64()),
        }
    }

    fn check(&self, input: &Tensor<T>) -> Result<()> {
        let c = self.channels();
        if input.c() != c
            || self.beta.len() != c
            || self.running_mean.len() != c
            || self.running_var.len() != c
        {
            return Err(Error::Shape(format!(
                "batch norm over {} channels applied to input {:?}",
                c,
                input.shape()
            )));
        }
        Ok(())
    }
}

/// Per-channel mean and biased variance over `(n, h, w)`.
fn batch_stats<T: Element>(input: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = input.c();
    let count = input.n() * input.h() * input.w();
    if count == 0 {
        return Err(Error::Domain(
            "batch statistics of an empty batch".into(),
        ));
    }
    let mut mean = vec![0f64; c];
    for px in input.data().chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0f64; c];
    for px in input.data().chunks_exact(c) {
        for ((s, v), m) in var.iter_mut().zip(px).zip(&mean) {
            let d = v.as_f64() - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= count as f64);
    Ok((mean, var))
}

fn normalize<T: Element>(
    input: &Tensor<T>,
    p: &BatchNormParams<T>,
    mean: &[f64],
    var: &[f64],
) -> Result<Tensor<T>> {
    let c = p.channels();
    let eps = p.epsilon.as_f64();
    let scale: Vec<f64> = (0..c)
        .map(|i| p.gamma[i].as_f64() / (var[i] + eps).sqrt())
        .collect();
    let mut out = Tensor::zeros(input.shape())?;
    if c == 0 {
        return Ok(out);
    }
    for (o, x) in out
        .data_mut()
        .chunks_exact_mut(c)
        .zip(input.data().chunks_exact(c))
    {
        for i in 0..c {
            o[i] = T::of_f64((x[i].as_f64() - mean[i]) * scale[i] + p.beta[i].as_f64());
        }
    }
    Ok(out)
}

/// Train mode normalizes with batch statistics and folds them into the
/// running statistics; inference mode uses the running statistics.
pub fn batchnorm_forward<T: Element>(
    input: &Tensor<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    p.check(input)?;
    match mode {
        Mode::Inference => batchnorm_inference(input, p),
        Mode::Train => {
            let (mean, var) = batch_stats(input)?;
            let out = normalize(input, p, &mean, &var)?;
            let m = p.momentum.as_f64();
            for i in 0..p.channels() {
                p.running_mean[i] =
                    T::of_f64((1.0 - m) * p.running_mean[i].as_f64() + m * mean[i]);
                p.running_var[i] = T::of_f64((1.0 - m) * p.running_var[i].as_f64() + m * var[i]);
            }
            Ok(out)
        }
    }
}

pub fn batchnorm_inference<T: Element>(input: &Tensor<T>, p: &BatchNormParams<T>) -> Result<Tensor<T>> {
    p.check(input)?;
    let mean: Vec<f64> = p.running_mean.iter().map(|v| v.as_f64()).collect();
    let var: Vec<f64> = p.running_var.iter().map(|v| v.as_f64().max(0.0)).collect();
    normalize(input, p, &mean, &var)
}

/// Backward pass of the train-mode forward.
pub fn batchnorm_backward<T: Element>(
    input: &Tensor<T>,
    p: &BatchNormParams<T>,
    grad_output: &Tensor<T>,
) -> Result<LayerGrads<BatchNormGrads<T>, T>> {
    p.check(input)?;
    if grad_output.shape() != input.shape() {
        return Err(Error::Shape(format!(
            "batch norm output gradient {:?} does not match input {:?}",
            grad_output.shape(),
            input.shape()
        )));
    }
    let (mean, var) = batch_stats(input)?;
    let c = p.channels();
    let count = (input.n() * input.h() * input.w()) as f64;
    let eps = p.epsilon.as_f64();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

    let mut sum_g = vec![0f64; c];
    let mut sum_g_xhat = vec![0f64; c];
    for (x, g) in input
        .data()
        .chunks_exact(c)
        .zip(grad_output.data().chunks_exact(c))
    {
        for i in 0..c {
            let xhat = (x[i].as_f64() - mean[i]) * inv_std[i];
            sum_g[i] += g[i].as_f64();
            sum_g_xhat[i] += g[i].as_f64() * xhat;
        }
    }

    let mut grad_input = Tensor::zeros(input.shape())?;
    for ((gi, x), g) in grad_input
        .data_mut()
        .chunks_exact_mut(c)
        .zip(input.data().chunks_exact(c))
        .zip(grad_output.data().chunks_exact(c))
    {
        for i in 0..c {
            let xhat = (x[i].as_f64() - mean[i]) * inv_std[i];
            let centered = g[i].as_f64() - sum_g[i] / count - xhat * sum_g_xhat[i] / count;
            gi[i] = T::of_f64(p.gamma[i].as_f64() * inv_std[i] * centered);
        }
    }
    Ok(LayerGrads {
        grad_input,
        grad_params: BatchNormGrads {
            gamma: sum_g_xhat.into_iter().map(T::of_f64).collect(),
            beta: sum_g.into_iter().map(T::of_f64).collect(),
        },
    })
}
