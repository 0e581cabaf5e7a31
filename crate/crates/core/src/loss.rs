//! Normalized endpoint error, its gradient, and average endpoint error.
//!
//! The normalized error between a predicted flow `p` and ground truth `g` is
//!
//! ```text
//! NE = sqrt( sum_x  |p(x) - g(x)|^2 / (|grad g(x)|^2 + eps) )
//! ```
//!
//! where the squared residual sums both flow components and `|grad g|^2`
//! sums the squares of all four spatial partials of the ground truth. Its
//! exact derivative is
//!
//! ```text
//! dNE/dp(x) = (p(x) - g(x)) / ((|grad g(x)|^2 + eps) * NE)
//! ```
//!
//! and is defined as zero when `NE == 0`. Pixels masked invalid in the
//! ground truth contribute nothing.

use crate::data::FlowField;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Discretisation of the ground-truth flow's spatial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientScheme {
    /// Central differences, one-sided where a neighbour is missing.
    Central,
    /// Forward differences, backward at the last column/row.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeConfig {
    pub epsilon: f64,
    pub gradient_scheme: GradientScheme,
}

impl Default for NeConfig {
    fn default() -> Self {
        NeConfig {
            epsilon: 1e-2,
            gradient_scheme: GradientScheme::Central,
        }
    }
}

impl NeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "NE epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Derivative of `plane` at `i` along an axis, given neighbour indices
/// (`None` when out of bounds or masked).
fn partial(plane: &[f32], i: usize, prev: Option<usize>, next: Option<usize>, scheme: GradientScheme) -> f64 {
    let at = |j: usize| plane[j] as f64;
    match (scheme, prev, next) {
        (GradientScheme::Central, Some(p), Some(n)) => (at(n) - at(p)) / 2.0,
        (_, _, Some(n)) => at(n) - at(i),
        (_, Some(p), None) => at(i) - at(p),
        (_, None, None) => 0.0,
    }
}

/// `|grad g|^2` at every pixel, summed over `du/dx, du/dy, dv/dx, dv/dy`.
pub fn gradient_energy(gt: &FlowField, scheme: GradientScheme) -> Vec<f64> {
    let (w, h) = (gt.width(), gt.height());
    let valid = gt.valid();
    let neighbour = |ok: bool, j: usize| (ok && valid[j]).then_some(j);
    let mut energy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = gt.index(x, y);
            if !valid[i] {
                continue;
            }
            let left = neighbour(x > 0, i.wrapping_sub(1));
            let right = neighbour(x + 1 < w, i + 1);
            let up = neighbour(y > 0, i.wrapping_sub(w));
            let down = neighbour(y + 1 < h, i + w);
            let mut e = 0.0;
            for plane in [gt.u(), gt.v()] {
                let dx = partial(plane, i, left, right, scheme);
                let dy = partial(plane, i, up, down, scheme);
                e += dx * dx + dy * dy;
            }
            energy[i] = e;
        }
    }
    energy
}

/// Ground truth prepared for repeated loss evaluation: per-pixel weights
/// `1 / (|grad g|^2 + eps)` are computed once.
#[derive(Debug, Clone)]
pub struct NeTarget {
    width: usize,
    height: usize,
    gt_u: Vec<f64>,
    gt_v: Vec<f64>,
    weight: Vec<f64>,
    valid: Vec<bool>,
}

/// Gradient of NE with respect to each predicted `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGradient {
    pub width: usize,
    pub height: usize,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

impl NeTarget {
    pub fn new(gt: &FlowField, cfg: &NeConfig) -> Result<Self> {
        cfg.validate()?;
        if gt.valid_count() == 0 {
            return Err(Error::Domain(
                "every ground-truth pixel is masked".into(),
            ));
        }
        let energy = gradient_energy(gt, cfg.gradient_scheme);
        Ok(NeTarget {
            width: gt.width(),
            height: gt.height(),
            gt_u: gt.u().iter().map(|&v| v as f64).collect(),
            gt_v: gt.v().iter().map(|&v| v as f64).collect(),
            weight: energy.iter().map(|e| 1.0 / (e + cfg.epsilon)).collect(),
            valid: gt.valid().to_vec(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    /// Weighted residuals at valid pixels: `(index, w, r_u, r_v)`.
    fn residuals<'a>(
        &'a self,
        pred: impl Fn(usize) -> (f64, f64) + 'a,
    ) -> impl Iterator<Item = (usize, f64, f64, f64)> + 'a {
        (0..self.weight.len()).filter(|&i| self.valid[i]).map(move |i| {
            let (pu, pv) = pred(i);
            (i, self.weight[i], pu - self.gt_u[i], pv - self.gt_v[i])
        })
    }

    fn loss_with(&self, pred: impl Fn(usize) -> (f64, f64)) -> f64 {
        self.residuals(pred)
            .map(|(_, w, ru, rv)| w * (ru * ru + rv * rv))
            .sum::<f64>()
            .sqrt()
    }

    fn check_flow(&self, pred: &FlowField) -> Result<()> {
        if pred.width() != self.width || pred.height() != self.height {
            return Err(Error::Shape(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.width(),
                pred.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    pub fn loss(&self, pred: &FlowField) -> Result<f64> {
        self.check_flow(pred)?;
        Ok(self.loss_with(|i| (pred.u()[i] as f64, pred.v()[i] as f64)))
    }

    pub fn gradient(&self, pred: &FlowField) -> Result<FlowGradient> {
        self.check_flow(pred)?;
        let at = |i: usize| (pred.u()[i] as f64, pred.v()[i] as f64);
        let ne = self.loss_with(at);
        let n = self.width * self.height;
        let mut g = FlowGradient {
            width: self.width,
            height: self.height,
            du: vec![0.0; n],
            dv: vec![0.0; n],
        };
        if ne > 0.0 {
            for (i, w, ru, rv) in self.residuals(at) {
                g.du[i] = w * ru / ne;
                g.dv[i] = w * rv / ne;
            }
        }
        Ok(g)
    }

    /// NE of a network output read from channels 0/1 of batch item `b`,
    /// with this target's top-left corner at `(x0, y0)` in the output.
    ///
    /// `scale * dNE/dpred` is written into the same region of `grad`; the
    /// rest of `grad` is left untouched.
    pub fn loss_and_grad_tensor<T: Element>(
        &self,
        pred: &Tensor<T>,
        b: usize,
        x0: usize,
        y0: usize,
        scale: f64,
        grad: &mut Tensor<T>,
    ) -> Result<f64> {
        if pred.c() != 2
            || b >= pred.n()
            || x0 + self.width > pred.w()
            || y0 + self.height > pred.h()
            || grad.shape() != pred.shape()
        {
            return Err(Error::Shape(format!(
                "{}x{} target at ({x0}, {y0}) does not fit prediction {:?}",
                self.width,
                self.height,
                pred.shape()
            )));
        }
        let offset = |i: usize| pred.offset([b, y0 + i / self.width, x0 + i % self.width, 0]);
        let at = |i: usize| {
            let o = offset(i);
            (pred.data()[o].as_f64(), pred.data()[o + 1].as_f64())
        };
        let ne = self.loss_with(at);
        if ne > 0.0 {
            let coeff = scale / ne;
            for (i, w, ru, rv) in self.residuals(at) {
                let o = offset(i);
                grad.data_mut()[o] = T::of_f64(coeff * w * ru);
                grad.data_mut()[o + 1] = T::of_f64(coeff * w * rv);
            }
        }
        Ok(ne)
    }
}

pub fn ne_loss(pred: &FlowField, gt: &FlowField, cfg: &NeConfig) -> Result<f64> {
    NeTarget::new(gt, cfg)?.loss(pred)
}

pub fn ne_gradient(pred: &FlowField, gt: &FlowField, cfg: &NeConfig) -> Result<FlowGradient> {
    NeTarget::new(gt, cfg)?.gradient(pred)
}

/// Mean Euclidean endpoint error over pixels valid in `gt`.
pub fn average_epe(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    if !pred.same_size(gt) {
        return Err(Error::Shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..gt.valid().len() {
        if gt.valid()[i] {
            let du = pred.u()[i] as f64 - gt.u()[i] as f64;
            let dv = pred.v()[i] as f64 - gt.v()[i] as f64;
            total += (du * du + dv * dv).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Domain(
            "every ground-truth pixel is masked".into(),
        ));
    }
    Ok(total / count as f64)
}
