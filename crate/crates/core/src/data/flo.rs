//! Middlebury `.flo` codec.
//!
//! Layout, all little-endian: `f32` magic `202021.25`, `i32` width, `i32`
//! height, then `width * height` interleaved `(u, v)` `f32` pairs in
//! row-major order. Components with magnitude above `1e9` mark unknown flow.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::image::open_buffered;
use super::FlowField;
use crate::error::{Error, Result};

pub const FLO_MAGIC: f32 = 202021.25;
/// Components above this magnitude are treated as unknown.
pub const UNKNOWN_THRESHOLD: f32 = 1e9;
/// Value written for pixels whose mask is false.
pub const UNKNOWN_VALUE: f32 = 1e10;

pub fn decode_flo(input: &mut impl Read) -> Result<FlowField> {
    let mut header = [0u8; 12];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated .flo header".into()))?;
    let magic = f32::from_le_bytes(header[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!(
            "bad .flo magic {magic}, expected {FLO_MAGIC}"
        )));
    }
    let width = i32::from_le_bytes(header[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(header[8..12].try_into().unwrap());
    if width < 0 || height < 0 {
        return Err(Error::Format(format!("bad .flo size {width}x{height}")));
    }
    let (w, h) = (width as usize, height as usize);
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("oversized .flo".into()))?;
    let mut payload = Vec::with_capacity(need);
    input
        .take(need as u64)
        .read_to_end(&mut payload)
        .map_err(|e| Error::Format(format!(".flo payload: {e}")))?;
    if payload.len() != need {
        return Err(Error::Format(format!(
            "truncated .flo payload: {} of {need} bytes",
            payload.len()
        )));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for px in payload.chunks_exact(8) {
        let pu = f32::from_le_bytes(px[0..4].try_into().unwrap());
        let pv = f32::from_le_bytes(px[4..8].try_into().unwrap());
        valid.push(
            pu.is_finite()
                && pv.is_finite()
                && pu.abs() <= UNKNOWN_THRESHOLD
                && pv.abs() <= UNKNOWN_THRESHOLD,
        );
        u.push(pu);
        v.push(pv);
    }
    FlowField::from_parts(w, h, u, v, valid)
}

/// Encodes valid pixels verbatim. An invalid pixel keeps its stored values
/// when they already read back as unknown, otherwise [`UNKNOWN_VALUE`] is
/// written so the mask survives the round trip.
pub fn encode_flo(out: &mut impl Write, flow: &FlowField) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(12 + flow.width() * flow.height() * 8);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    buf.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for i in 0..flow.u().len() {
        let (mut u, mut v) = (flow.u()[i], flow.v()[i]);
        let reads_unknown = !(u.abs() <= UNKNOWN_THRESHOLD && v.abs() <= UNKNOWN_THRESHOLD);
        if !flow.valid()[i] && !reads_unknown {
            u = UNKNOWN_VALUE;
            v = UNKNOWN_VALUE;
        }
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let mut reader = open_buffered(path)?;
    decode_flo(&mut reader).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        encode_flo(&mut out, flow)?;
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
