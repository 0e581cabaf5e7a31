//! Dense 4-D tensors in `(batch, height, width, channels)` row-major layout.
//!
//! Every activation, weight and gradient in the crate is a [`Tensor`]. The
//! channel index varies fastest, so a pixel's feature vector is contiguous.
//! Reductions accumulate in `f64` regardless of the element type.

use std::io::{Read, Write};

use crate::element::Element;
use crate::error::{Error, Result};

/// `(n, h, w, c)`.
pub type Shape = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

fn checked_len(shape: Shape) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&len| len <= isize::MAX as usize / 8)
        .ok_or_else(|| Error::Size(format!("shape {shape:?} overflows addressable size")))
}

impl<T: Element> Tensor<T> {
    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Result<Self> {
        let len = checked_len(shape)?;
        Ok(Tensor {
            shape,
            data: vec![value; len],
        })
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        let len = checked_len(shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(Shape) -> T) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let [n, h, w, c] = shape;
        let mut i = 0;
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        t.data[i] = f([b, y, x, ch]);
                        i += 1;
                    }
                }
            }
        }
        Ok(t)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn n(&self) -> usize {
        self.shape[0]
    }
    pub fn h(&self) -> usize {
        self.shape[1]
    }
    pub fn w(&self) -> usize {
        self.shape[2]
    }
    pub fn c(&self) -> usize {
        self.shape[3]
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Flat offset of `[n, h, w, c]`.
    #[inline]
    pub fn offset(&self, idx: Shape) -> usize {
        let [_, h, w, c] = self.shape;
        ((idx[0] * h + idx[1]) * w + idx[2]) * c + idx[3]
    }

    fn check_index(&self, idx: Shape) -> Result<()> {
        if idx.iter().zip(self.shape.iter()).any(|(i, d)| i >= d) {
            return Err(Error::Shape(format!(
                "index {idx:?} out of bounds for shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    pub fn get(&self, idx: Shape) -> Result<T> {
        self.check_index(idx)?;
        Ok(self.data[self.offset(idx)])
    }

    pub fn set(&mut self, idx: Shape, value: T) -> Result<()> {
        self.check_index(idx)?;
        let o = self.offset(idx);
        self.data[o] = value;
        Ok(())
    }

    /// Contiguous slice holding one batch item.
    pub fn item(&self, b: usize) -> &[T] {
        let stride = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[b * stride..(b + 1) * stride]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let stride = self.shape[1] * self.shape[2] * self.shape[3];
        &mut self.data[b * stride..(b + 1) * stride]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_binary(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise op on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.map_binary(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.map_binary(other, |a, b| a - b)
    }
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.map_binary(other, |a, b| a * b)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "accumulate {:?} into {:?}",
                other.shape, self.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn reduce_sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn reduce_mean(&self) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        Ok(self.reduce_sum() / self.data.len() as f64)
    }

    /// Inner product of two same-shape tensors, accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "dot of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    /// Copies channels `[start, end)` into a new tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Self> {
        let [n, h, w, c] = self.shape;
        if start > end || end > c {
            return Err(Error::Shape(format!(
                "channel range {start}..{end} out of 0..{c}"
            )));
        }
        let mut data = Vec::with_capacity(n * h * w * (end - start));
        for px in self.data.chunks_exact(c.max(1)).take(n * h * w) {
            data.extend_from_slice(&px[start..end]);
        }
        if c == 0 {
            data.clear();
        }
        Tensor::from_vec([n, h, w, end - start], data)
    }
}

impl Tensor<f32> {
    /// Binary dump: four little-endian `u32` shape words, then the values as
    /// little-endian `f32` in layout order.
    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        for d in self.shape {
            let d = u32::try_from(d).map_err(|_| {
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32")
            })?;
            out.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        input
            .read_exact(&mut header)
            .map_err(|e| Error::Format(format!("tensor header: {e}")))?;
        let mut shape = [0usize; 4];
        for (i, d) in shape.iter_mut().enumerate() {
            *d = u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        }
        let len = checked_len(shape)?;
        let mut raw = vec![0u8; len * 4];
        input
            .read_exact(&mut raw)
            .map_err(|e| Error::Format(format!("tensor payload for {shape:?}: {e}")))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Tensor::from_vec(shape, data)
    }
}
