//! Assembly of the 8-channel network input `[R1 G1 B1 R2 G2 B2 u v]`.
//!
//! Inputs are reflect-padded on the bottom and right edges up to the next
//! multiple of [`SIZE_MULTIPLE`] so FinalNet's four 2x poolings divide
//! evenly; the [`CropBox`] maps the network output back onto the frame.

use super::{FlowField, SamplePair};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIZE_MULTIPLE: usize = 16;
pub const INPUT_CHANNELS: usize = 8;

/// Region of a padded tensor that holds the original frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone)]
pub struct AssembledInput {
    pub tensor: Tensor,
    pub crop: CropBox,
}

pub fn padded_size(len: usize) -> usize {
    len.div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE
}

/// Mirror index into `0..len` without repeating the edge sample.
pub fn reflect_index(i: usize, len: usize) -> usize {
    if len <= 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

fn guide(flow: &FlowField, i: usize) -> (f32, f32) {
    if flow.valid()[i] {
        (flow.u()[i], flow.v()[i])
    } else {
        (0.0, 0.0)
    }
}

fn write_item(s: &SamplePair, out: &mut [f32], pw: usize, ph: usize) {
    let (w, h) = (s.width(), s.height());
    for y in 0..ph {
        let sy = reflect_index(y, h);
        for x in 0..pw {
            let sx = reflect_index(x, w);
            let px = &mut out[(y * pw + x) * INPUT_CHANNELS..][..INPUT_CHANNELS];
            px[0..3].copy_from_slice(&s.frame1.get(sx, sy));
            px[3..6].copy_from_slice(&s.frame2.get(sx, sy));
            let (u, v) = guide(&s.approx_flow, sy * w + sx);
            px[6] = u;
            px[7] = v;
        }
    }
}

pub fn assemble_input(s: &SamplePair) -> Result<AssembledInput> {
    let (tensor, crop) = assemble_batch(std::slice::from_ref(s))?;
    Ok(AssembledInput { tensor, crop })
}

/// Stacks same-sized samples into one `(n, h', w', 8)` batch.
pub fn assemble_batch(samples: &[SamplePair]) -> Result<(Tensor, CropBox)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Input("cannot assemble an empty batch".into()))?;
    let (w, h) = (first.width(), first.height());
    if let Some(odd) = samples.iter().find(|s| s.width() != w || s.height() != h) {
        return Err(Error::Shape(format!(
            "batch mixes {}x{} ({}) with {w}x{h} ({})",
            odd.width(),
            odd.height(),
            odd.id,
            first.id
        )));
    }
    let (pw, ph) = (padded_size(w), padded_size(h));
    let mut t = Tensor::zeros([samples.len(), ph, pw, INPUT_CHANNELS])?;
    for (b, s) in samples.iter().enumerate() {
        write_item(s, t.item_mut(b), pw, ph);
    }
    Ok((
        t,
        CropBox {
            x0: 0,
            y0: 0,
            width: w,
            height: h,
        },
    ))
}

/// Reads the predicted flow of batch item `b` back from a padded output.
pub fn crop_output<T: Element>(output: &Tensor<T>, b: usize, crop: CropBox) -> Result<FlowField> {
    FlowField::from_tensor(output, b, crop.x0, crop.y0, crop.width, crop.height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::textured_pair;

    fn sample(w: usize, h: usize) -> SamplePair {
        let (f1, f2) = textured_pair(w, h, (1.0, -1.0), 2.0, 3);
        let mut approx = FlowField::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                approx.set(x, y, x as f32 * 0.5, -(y as f32));
            }
        }
        SamplePair::new("s", f1, f2, approx, None).unwrap()
    }

    #[test]
    fn no_padding_for_multiples_of_sixteen() {
        let a = assemble_input(&sample(16, 16)).unwrap();
        assert_eq!(a.tensor.shape(), [1, 16, 16, 8]);
        assert_eq!(a.crop, CropBox { x0: 0, y0: 0, width: 16, height: 16 });
    }

    #[test]
    fn sintel_height_pads_to_448() {
        assert_eq!(padded_size(436), 448);
        assert_eq!(padded_size(1024), 1024);
    }

    #[test]
    fn channels_hold_frames_and_guide() {
        let s = sample(20, 13);
        let a = assemble_input(&s).unwrap();
        assert_eq!(a.tensor.shape(), [1, 16, 32, 8]);
        for y in 0..13 {
            for x in 0..20 {
                let at = |c| a.tensor.get([0, y, x, c]).unwrap();
                assert_eq!([at(0), at(1), at(2)], s.frame1.get(x, y));
                assert_eq!([at(3), at(4), at(5)], s.frame2.get(x, y));
                assert_eq!((at(6), at(7)), s.approx_flow.get(x, y));
            }
        }
        // bottom row 13 mirrors row 11
        assert_eq!(a.tensor.get([0, 13, 4, 0]).unwrap(), s.frame1.get(4, 11)[0]);
    }

    #[test]
    fn crop_back_is_lossless() {
        let s = sample(21, 18);
        let a = assemble_input(&s).unwrap();
        let uv = a.tensor.slice_channels(6, 8).unwrap();
        assert_eq!(crop_output(&uv, 0, a.crop).unwrap(), s.approx_flow);
    }

    #[test]
    fn reflect_handles_tiny_axes() {
        assert_eq!(reflect_index(5, 1), 0);
        assert_eq!((0..8).map(|i| reflect_index(i, 3)).collect::<Vec<_>>(), vec![0, 1, 2, 1, 0, 1, 2, 1]);
    }

    #[test]
    fn mixed_sizes_rejected() {
        assert!(assemble_batch(&[sample(16, 16), sample(32, 16)]).is_err());
        assert!(assemble_batch(&[]).is_err());
    }
}
