//! Procedurally textured, globally translated frame pairs.
//!
//! Used for smoke tests, the overfit regression, and demo datasets. The
//! texture is a lattice of random RGB values interpolated bilinearly, so
//! sub-pixel shifts are well defined; integer shifts reproduce the first
//! frame's pixels exactly.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::flo::write_flo;
use super::image::write_png;
use super::{FlowField, RgbImage, SamplePair};
use crate::blockmatch::BlockMatchConfig;
use crate::error::{Error, Result};

struct Texture {
    lattice: Vec<[f32; 3]>,
    cols: usize,
    rows: usize,
    spacing: f64,
}

impl Texture {
    fn new(width: f64, height: f64, spacing: f64, rng: &mut impl Rng) -> Self {
        let cols = (width / spacing).ceil() as usize + 2;
        let rows = (height / spacing).ceil() as usize + 2;
        let lattice = (0..cols * rows)
            .map(|_| [rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()])
            .collect();
        Texture {
            lattice,
            cols,
            rows,
            spacing,
        }
    }

    fn sample(&self, x: f64, y: f64) -> [f32; 3] {
        let gx = (x / self.spacing).clamp(0.0, (self.cols - 1) as f64);
        let gy = (y / self.spacing).clamp(0.0, (self.rows - 1) as f64);
        let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.cols - 1), (y0 + 1).min(self.rows - 1));
        let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
        let at = |cx: usize, cy: usize| self.lattice[cy * self.cols + cx];
        let mut out = [0f32; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let top = (1.0 - fx) * at(x0, y0)[c] as f64 + fx * at(x1, y0)[c] as f64;
            let bottom = (1.0 - fx) * at(x0, y1)[c] as f64 + fx * at(x1, y1)[c] as f64;
            *o = ((1.0 - fy) * top + fy * bottom) as f32;
        }
        out
    }
}

/// A textured frame and the same texture moved by `shift = (u, v)` pixels.
///
/// `spacing` is the lattice period in pixels; 1 gives white noise.
pub fn textured_pair(
    width: usize,
    height: usize,
    shift: (f32, f32),
    spacing: f64,
    seed: u64,
) -> (RgbImage, RgbImage) {
    let mut frames = textured_sequence(width, height, shift, 2, spacing, seed);
    let f2 = frames.pop().unwrap();
    (frames.pop().unwrap(), f2)
}

/// `count` frames of a texture moving by `shift` per frame.
pub fn textured_sequence(
    width: usize,
    height: usize,
    shift: (f32, f32),
    count: usize,
    spacing: f64,
    seed: u64,
) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let travel_x = shift.0.abs() as f64 * count as f64;
    let travel_y = shift.1.abs() as f64 * count as f64;
    let margin = travel_x.max(travel_y).ceil() + spacing;
    let tex = Texture::new(
        width as f64 + 2.0 * margin,
        height as f64 + 2.0 * margin,
        spacing,
        &mut rng,
    );
    (0..count)
        .map(|k| {
            let (dx, dy) = (shift.0 as f64 * k as f64, shift.1 as f64 * k as f64);
            RgbImage::from_fn(width, height, |x, y| {
                tex.sample(x as f64 - dx + margin, y as f64 - dy + margin)
            })
        })
        .collect()
}

/// A translated pair with constant ground truth and a block-matching guide.
pub fn translation_sample(
    id: impl Into<String>,
    width: usize,
    height: usize,
    shift: (f32, f32),
    spacing: f64,
    seed: u64,
    bm: &BlockMatchConfig,
) -> Result<SamplePair> {
    let (f1, f2) = textured_pair(width, height, shift, spacing, seed);
    let gt = FlowField::constant(width, height, shift.0, shift.1);
    SamplePair::with_block_matching(id, f1, f2, Some(gt), bm)
}

/// One scene of a synthetic Sintel-style tree.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub name: String,
    pub frames: usize,
    pub shift: (f32, f32),
}

fn write_frames(dir: &Path, frames: &[RgbImage], name: impl Fn(usize) -> String) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, f) in frames.iter().enumerate() {
        write_png(dir.join(name(k)), &f.to_rgb8())?;
    }
    Ok(())
}

/// Writes scenes in the Sintel layout (`<pass>/<scene>/frame_NNNN.png`,
/// `flow/<scene>/frame_NNNN.flo`) for both passes.
pub fn write_sintel_tree(
    root: impl AsRef<Path>,
    scenes: &[SyntheticScene],
    width: usize,
    height: usize,
    seed: u64,
) -> Result<()> {
    let root = root.as_ref();
    for (i, scene) in scenes.iter().enumerate() {
        // quantise through 8 bits so the stored frames are what gets loaded
        let frames: Vec<RgbImage> = textured_sequence(width, height, scene.shift, scene.frames, 2.0, seed + i as u64)
            .iter()
            .map(|f| f.to_rgb8().to_rgb())
            .collect();
        for pass in ["clean", "final"] {
            write_frames(&root.join(pass).join(&scene.name), &frames, |k| {
                format!("frame_{:04}.png", k + 1)
            })?;
        }
        let flow_dir = root.join("flow").join(&scene.name);
        fs::create_dir_all(&flow_dir).map_err(|e| Error::io(&flow_dir, e))?;
        let gt = FlowField::constant(width, height, scene.shift.0, scene.shift.1);
        for k in 1..scene.frames {
            write_flo(flow_dir.join(format!("frame_{k:04}.flo")), &gt)?;
        }
    }
    Ok(())
}

/// Writes `(name, shift)` sequences in the Middlebury layout.
pub fn write_middlebury_tree(
    root: impl AsRef<Path>,
    sequences: &[(&str, (f32, f32))],
    width: usize,
    height: usize,
    seed: u64,
) -> Result<()> {
    let root = root.as_ref();
    for (i, (name, shift)) in sequences.iter().enumerate() {
        let dir = root.join(name);
        let frames = textured_sequence(width, height, *shift, 2, 2.0, seed + i as u64);
        write_frames(&dir, &frames, |k| format!("frame{}.png", 10 + k))?;
        write_flo(dir.join("flow10.flo"), &FlowField::constant(width, height, shift.0, shift.1))?;
    }
    Ok(())
}
