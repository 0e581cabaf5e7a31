use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dense per-pixel displacement `(u, v)` in pixels with a validity mask.
///
/// `u` is horizontal (positive right) and `v` vertical (positive down);
/// a valid pixel at `(x, y)` in the first frame moves to `(x + u, y + v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        let len = width * height;
        FlowField {
            width,
            height,
            u: vec![u; len],
            v: vec![v; len],
            valid: vec![true; len],
        }
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        u: Vec<f32>,
        v: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let len = width * height;
        if u.len() != len || v.len() != len || valid.len() != len {
            return Err(Error::Shape(format!(
                "flow {width}x{height} needs {len} entries per plane"
            )));
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
            valid,
        })
    }

    /// Reads channels 0 and 1 of batch item `b` inside the box at `(x0, y0)`.
    pub fn from_tensor<T: Element>(
        t: &Tensor<T>,
        b: usize,
        x0: usize,
        y0: usize,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if t.c() < 2 || b >= t.n() || x0 + width > t.w() || y0 + height > t.h() {
            return Err(Error::Shape(format!(
                "cannot read a {width}x{height} flow at ({x0}, {y0}) from {:?}",
                t.shape()
            )));
        }
        let mut f = FlowField::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let o = t.offset([b, y0 + y, x0 + x, 0]);
                f.set(x, y, t.data()[o].as_f64() as f32, t.data()[o + 1].as_f64() as f32);
            }
        }
        Ok(f)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn u(&self) -> &[f32] {
        &self.u
    }
    pub fn v(&self) -> &[f32] {
        &self.v
    }
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = self.index(x, y);
        (self.u[i], self.v[i])
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        let i = self.index(x, y);
        self.u[i] = u;
        self.v[i] = v;
    }

    pub fn set_valid(&mut self, x: usize, y: usize, valid: bool) {
        let i = self.index(x, y);
        self.valid[i] = valid;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn same_size(&self, other: &FlowField) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Applies `f` to every `(u, v)`, keeping the mask.
    pub fn map(&self, f: impl Fn(f32, f32) -> (f32, f32)) -> Self {
        let mut out = self.clone();
        for i in 0..self.u.len() {
            let (u, v) = f(self.u[i], self.v[i]);
            out.u[i] = u;
            out.v[i] = v;
        }
        out
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Shape(format!(
                "crop {width}x{height} at ({x0}, {y0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut out = FlowField::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let src = self.index(x0 + x, y0 + y);
                let dst = out.index(x, y);
                out.u[dst] = self.u[src];
                out.v[dst] = self.v[src];
                out.valid[dst] = self.valid[src];
            }
        }
        Ok(out)
    }

    /// Mirror left-right; horizontal motion changes sign.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = self.index(self.width - 1 - x, y);
                let dst = self.index(x, y);
                out.u[dst] = -self.u[src];
                out.v[dst] = self.v[src];
                out.valid[dst] = self.valid[src];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_twice_is_identity_and_negates_u() {
        let mut f = FlowField::zeros(3, 2);
        f.set(0, 0, 1.0, 2.0);
        f.set_valid(2, 1, false);
        let g = f.flip_horizontal();
        assert_eq!(g.get(2, 0), (-1.0, 2.0));
        assert!(!g.is_valid(0, 1));
        assert_eq!(g.flip_horizontal(), f);
    }

    #[test]
    fn crop_bounds() {
        let f = FlowField::constant(4, 4, 1.0, 1.0);
        assert_eq!(f.crop(1, 1, 3, 3).unwrap().width(), 3);
        assert!(f.crop(2, 0, 3, 1).is_err());
    }
}
