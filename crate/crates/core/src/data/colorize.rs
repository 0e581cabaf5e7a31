//! Middlebury colour-wheel rendering of flow fields.

use std::f64::consts::PI;

use super::image::Rgb8Image;
use super::FlowField;

/// Hue segment lengths: red-yellow, yellow-green, green-cyan, cyan-blue,
/// blue-magenta, magenta-red.
const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

fn color_wheel() -> Vec<[f64; 3]> {
    let mut wheel = Vec::with_capacity(SEGMENTS.iter().sum());
    let [ry, yg, gc, cb, bm, mr] = SEGMENTS;
    let ramp = |i: usize, n: usize| 255.0 * i as f64 / n as f64;
    for i in 0..ry {
        wheel.push([255.0, ramp(i, ry), 0.0]);
    }
    for i in 0..yg {
        wheel.push([255.0 - ramp(i, yg), 255.0, 0.0]);
    }
    for i in 0..gc {
        wheel.push([0.0, 255.0, ramp(i, gc)]);
    }
    for i in 0..cb {
        wheel.push([0.0, 255.0 - ramp(i, cb), 255.0]);
    }
    for i in 0..bm {
        wheel.push([ramp(i, bm), 0.0, 255.0]);
    }
    for i in 0..mr {
        wheel.push([255.0, 0.0, 255.0 - ramp(i, mr)]);
    }
    wheel
}

/// Hue encodes direction and saturation encodes magnitude relative to
/// `max_mag` (the largest valid magnitude when `None`). Zero motion is
/// white, magnitudes beyond `max_mag` are darkened, invalid pixels black.
pub fn colorize_flow(flow: &FlowField, max_mag: Option<f32>) -> Rgb8Image {
    let wheel = color_wheel();
    let ncols = wheel.len();
    let max_rad = match max_mag {
        Some(m) => m as f64,
        None => (0..flow.u().len())
            .filter(|&i| flow.valid()[i])
            .map(|i| (flow.u()[i] as f64).hypot(flow.v()[i] as f64))
            .fold(0.0, f64::max),
    };
    let norm = if max_rad > 0.0 { max_rad } else { 1.0 };
    let mut data = Vec::with_capacity(flow.u().len() * 3);
    for i in 0..flow.u().len() {
        if !flow.valid()[i] {
            data.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        let u = flow.u()[i] as f64 / norm;
        let v = flow.v()[i] as f64 / norm;
        let rad = u.hypot(v);
        let mut a = (-v).atan2(-u) / PI;
        if a >= 1.0 {
            // +pi and -pi are the same direction
            a = -1.0;
        }
        let fk = (a + 1.0) / 2.0 * (ncols - 1) as f64;
        let k0 = fk.floor() as usize;
        let k1 = (k0 + 1) % ncols;
        let f = fk - k0 as f64;
        for ch in 0..3 {
            let col = ((1.0 - f) * wheel[k0][ch] + f * wheel[k1][ch]) / 255.0;
            let col = if rad <= 1.0 {
                1.0 - rad * (1.0 - col)
            } else {
                col * 0.75
            };
            data.push((255.0 * col).floor() as u8);
        }
    }
    Rgb8Image {
        width: flow.width(),
        height: flow.height(),
        data,
    }
}
