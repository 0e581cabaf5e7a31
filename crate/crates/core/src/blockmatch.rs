//! Exhaustive block matching used as the coarse guide flow.
//!
//! The image is tiled into cells of `step x step` pixels. Each cell is
//! matched through a `block_size` window centred on it (shifted inward at
//! the borders) by trying every integer displacement within
//! `±search_radius` and keeping the lowest sum of absolute RGB differences.
//! Candidate windows that leave the second frame are skipped. Ties go to
//! the smaller displacement magnitude, then to the earlier candidate in
//! row-major `(dy, dx)` order.

use crate::data::{FlowField, RgbImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMatchConfig {
    pub block_size: usize,
    pub search_radius: usize,
    pub step: usize,
}

impl Default for BlockMatchConfig {
    fn default() -> Self {
        BlockMatchConfig {
            block_size: 9,
            search_radius: 15,
            step: 9,
        }
    }
}

impl BlockMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size < 3 || self.block_size % 2 == 0 {
            return Err(Error::Config(format!(
                "block size must be odd and at least 3, got {}",
                self.block_size
            )));
        }
        if self.search_radius < 1 {
            return Err(Error::Config("search radius must be at least 1".into()));
        }
        if self.step < 1 {
            return Err(Error::Config("block step must be at least 1".into()));
        }
        Ok(())
    }
}

/// Top-left corner of the matching window for the cell starting at `start`.
fn window_origin(start: usize, cell: usize, block: usize, len: usize) -> usize {
    let centre = start + (cell - 1) / 2;
    centre.saturating_sub(block / 2).min(len - block)
}

/// SAD between the window at `(x1, y1)` in `a` and `(x2, y2)` in `b`;
/// gives up and returns `None` once the running sum exceeds `bound`.
fn sad(
    a: &RgbImage,
    b: &RgbImage,
    (x1, y1): (usize, usize),
    (x2, y2): (usize, usize),
    block: usize,
    bound: f64,
) -> Option<f64> {
    let w = a.width();
    let (da, db) = (a.data(), b.data());
    let mut total = 0f64;
    for r in 0..block {
        let ra = &da[((y1 + r) * w + x1) * 3..][..block * 3];
        let rb = &db[((y2 + r) * w + x2) * 3..][..block * 3];
        for (p, q) in ra.iter().zip(rb) {
            total += (p - q).abs() as f64;
        }
        if total > bound {
            return None;
        }
    }
    Some(total)
}

pub fn block_match(frame1: &RgbImage, frame2: &RgbImage, cfg: &BlockMatchConfig) -> Result<FlowField> {
    cfg.validate()?;
    let (w, h) = (frame1.width(), frame1.height());
    if frame2.width() != w || frame2.height() != h {
        return Err(Error::Input(format!(
            "frames differ in size: {}x{} vs {}x{}",
            w,
            h,
            frame2.width(),
            frame2.height()
        )));
    }
    let block = cfg.block_size;
    if w < block || h < block {
        return Err(Error::Input(format!(
            "{w}x{h} image is smaller than the {block}x{block} block"
        )));
    }
    let r = cfg.search_radius as isize;
    let mut flow = FlowField::zeros(w, h);
    for cy in (0..h).step_by(cfg.step) {
        let cell_h = cfg.step.min(h - cy);
        let wy = window_origin(cy, cell_h, block, h);
        for cx in (0..w).step_by(cfg.step) {
            let cell_w = cfg.step.min(w - cx);
            let wx = window_origin(cx, cell_w, block, w);
            let mut best = (f64::INFINITY, isize::MAX, 0isize, 0isize);
            for dy in -r..=r {
                let y2 = wy as isize + dy;
                if y2 < 0 || y2 as usize + block > h {
                    continue;
                }
                for dx in -r..=r {
                    let x2 = wx as isize + dx;
                    if x2 < 0 || x2 as usize + block > w {
                        continue;
                    }
                    let Some(cost) = sad(frame1, frame2, (wx, wy), (x2 as usize, y2 as usize), block, best.0)
                    else {
                        continue;
                    };
                    let mag = dx * dx + dy * dy;
                    if cost < best.0 || (cost == best.0 && mag < best.1) {
                        best = (cost, mag, dx, dy);
                    }
                }
            }
            for y in cy..cy + cell_h {
                for x in cx..cx + cell_w {
                    flow.set(x, y, best.2 as f32, best.3 as f32);
                }
            }
        }
    }
    Ok(flow)
}

/// The `(u, v)` planes as a `(1, h, w, 2)` tensor in pixel units.
/// Pixels masked invalid contribute zero guidance.
pub fn flow_to_guide_channels(flow: &FlowField) -> Tensor {
    let mut t = Tensor::zeros([1, flow.height(), flow.width(), 2]).expect("flow size fits in memory");
    for i in 0..flow.u().len() {
        if flow.valid()[i] {
            t.data_mut()[2 * i] = flow.u()[i];
            t.data_mut()[2 * i + 1] = flow.v()[i];
        }
    }
    t
}

/// Inverse of [`flow_to_guide_channels`]; every pixel comes back valid.
pub fn guide_channels_to_flow(t: &Tensor) -> Result<FlowField> {
    FlowField::from_tensor(t, 0, 0, 0, t.w(), t.h())
}
