//! Network checkpoint files.
//!
//! Layout: the magic bytes `FLWC`, a version byte, a little-endian `u32`
//! manifest length, a UTF-8 manifest, then tensor dumps in layer order.
//! Conv blocks store weights, bias, BN scale, BN shift, running mean and
//! running variance; prediction layers store weights and bias. Vectors are
//! stored as `(1, 1, 1, c)` tensors.
//!
//! The manifest is line based:
//!
//! ```text
//! name FinalNet
//! in_channels 8
//! layer kind=conv_block c_out=32 epsilon=1e-5 momentum=0.1
//! layer kind=concat c_out=512 skip=6
//! ```

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use super::{LayerKind, LayerParams, LayerSpec, Network};
use crate::data::open_buffered;
use crate::error::{Error, Result};
use crate::layers::{BatchNormParams, ConvParams};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FLWC";
pub const CHECKPOINT_VERSION: u8 = 1;

fn manifest(net: &Network) -> String {
    let mut m = format!("name {}\nin_channels {}\n", net.name, net.in_channels);
    for (l, p) in net.layers.iter().zip(&net.params) {
        m.push_str(&format!("layer kind={} c_out={}", l.kind.name(), l.c_out));
        if let Some(s) = l.skip_source {
            m.push_str(&format!(" skip={s}"));
        }
        if let LayerParams::ConvBlock { bn, .. } = p {
            m.push_str(&format!(" epsilon={:?} momentum={:?}", bn.epsilon, bn.momentum));
        }
        m.push('\n');
    }
    m
}

fn vector(v: &[f32]) -> Tensor {
    Tensor::from_vec([1, 1, 1, v.len()], v.to_vec()).expect("length matches shape")
}

pub fn write_network(out: &mut impl Write, net: &Network) -> io::Result<()> {
    let m = manifest(net);
    let len = u32::try_from(m.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "manifest too long"))?;
    out.write_all(&CHECKPOINT_MAGIC)?;
    out.write_all(&[CHECKPOINT_VERSION])?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(m.as_bytes())?;
    for p in &net.params {
        match p {
            LayerParams::None => {}
            LayerParams::Conv(c) => {
                c.weights.write_to(out)?;
                vector(&c.bias).write_to(out)?;
            }
            LayerParams::ConvBlock { conv, bn } => {
                conv.weights.write_to(out)?;
                vector(&conv.bias).write_to(out)?;
                for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                    vector(v).write_to(out)?;
                }
            }
        }
    }
    Ok(())
}

pub fn save_network(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_network(&mut out, net)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

struct LayerEntry {
    spec: LayerSpec,
    bn: Option<(f32, f32)>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("checkpoint: {}", msg.into()))
}

fn parse_manifest(text: &str) -> Result<(String, usize, Vec<LayerEntry>)> {
    let mut name = None;
    let mut in_channels = None;
    let mut layers = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "name" => name = Some(rest.to_string()),
            "in_channels" => {
                in_channels = Some(
                    rest.parse()
                        .map_err(|_| format_err(format!("bad channel count {rest:?}")))?,
                )
            }
            "layer" => layers.push(parse_layer(rest)?),
            other => return Err(format_err(format!("unknown manifest key {other:?}"))),
        }
    }
    Ok((
        name.ok_or_else(|| format_err("manifest has no name"))?,
        in_channels.ok_or_else(|| format_err("manifest has no in_channels"))?,
        layers,
    ))
}

fn parse_layer(fields: &str) -> Result<LayerEntry> {
    let mut kind = None;
    let mut c_out = None;
    let mut skip = None;
    let mut eps = None;
    let mut momentum = None;
    for f in fields.split_whitespace() {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad layer field {f:?}")))?;
        let bad = || format_err(format!("bad value in {f:?}"));
        match k {
            "kind" => kind = Some(LayerKind::parse(v).ok_or_else(bad)?),
            "c_out" => c_out = Some(v.parse::<usize>().map_err(|_| bad())?),
            "skip" => skip = Some(v.parse::<usize>().map_err(|_| bad())?),
            "epsilon" => eps = Some(v.parse::<f32>().map_err(|_| bad())?),
            "momentum" => momentum = Some(v.parse::<f32>().map_err(|_| bad())?),
            _ => return Err(format_err(format!("unknown layer field {k:?}"))),
        }
    }
    let kind = kind.ok_or_else(|| format_err("layer without kind"))?;
    let bn = match (kind, eps, momentum) {
        (LayerKind::ConvBlock, Some(e), Some(m)) => Some((e, m)),
        (LayerKind::ConvBlock, _, _) => {
            return Err(format_err("conv block without batch norm settings"))
        }
        _ => None,
    };
    Ok(LayerEntry {
        spec: LayerSpec {
            kind,
            c_out: c_out.ok_or_else(|| format_err("layer without c_out"))?,
            skip_source: skip,
        },
        bn,
    })
}

fn read_tensor(input: &mut impl Read, shape: [usize; 4], what: &str) -> Result<Tensor> {
    let t = Tensor::read_from(input).map_err(|e| format_err(format!("{what}: {e}")))?;
    if t.shape() != shape {
        return Err(format_err(format!(
            "{what} has shape {:?}, manifest implies {shape:?}",
            t.shape()
        )));
    }
    Ok(t)
}

fn read_vector(input: &mut impl Read, len: usize, what: &str) -> Result<Vec<f32>> {
    Ok(read_tensor(input, [1, 1, 1, len], what)?.into_vec())
}

fn read_conv(input: &mut impl Read, c_in: usize, c_out: usize, i: usize) -> Result<ConvParams> {
    Ok(ConvParams {
        weights: read_tensor(input, [5, 5, c_in, c_out], &format!("layer {i} weights"))?,
        bias: read_vector(input, c_out, &format!("layer {i} bias"))?,
    })
}

/// Reads a network; trailing bytes (such as training state) are left unread.
pub fn read_network(input: &mut impl Read) -> Result<Network> {
    let mut head = [0u8; 9];
    input
        .read_exact(&mut head)
        .map_err(|e| format_err(format!("header: {e}")))?;
    if head[..4] != CHECKPOINT_MAGIC {
        return Err(format_err("not a checkpoint file (bad magic)"));
    }
    if head[4] != CHECKPOINT_VERSION {
        return Err(format_err(format!("unsupported version {}", head[4])));
    }
    let len = u32::from_le_bytes(head[5..9].try_into().unwrap()) as usize;
    let mut text = Vec::new();
    input
        .take(len as u64)
        .read_to_end(&mut text)
        .map_err(|e| format_err(format!("manifest: {e}")))?;
    if text.len() != len {
        return Err(format_err("truncated manifest"));
    }
    let text = String::from_utf8(text).map_err(|_| format_err("manifest is not UTF-8"))?;
    let (name, in_channels, entries) = parse_manifest(&text)?;
    let specs: Vec<LayerSpec> = entries.iter().map(|e| e.spec).collect();
    let skeleton: Network = Network::from_specs(name, in_channels, specs, 0)
        .map_err(|e| format_err(format!("invalid layer list: {e}")))?;
    let c_ins = skeleton.input_channels_per_layer();
    let mut params = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let c_out = e.spec.c_out;
        params.push(match e.spec.kind {
            LayerKind::ConvBlock => {
                let conv = read_conv(input, c_ins[i], c_out, i)?;
                let (epsilon, momentum) = e.bn.expect("parsed with conv block");
                let mut v = Vec::with_capacity(4);
                for what in ["scale", "shift", "running mean", "running variance"] {
                    v.push(read_vector(input, c_out, &format!("layer {i} {what}"))?);
                }
                let running_var = v.pop().unwrap();
                let running_mean = v.pop().unwrap();
                let beta = v.pop().unwrap();
                let gamma = v.pop().unwrap();
                LayerParams::ConvBlock {
                    conv,
                    bn: BatchNormParams {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                        epsilon,
                        momentum,
                    },
                }
            }
            LayerKind::Predict => LayerParams::Conv(read_conv(input, c_ins[i], c_out, i)?),
            _ => LayerParams::None,
        });
    }
    skeleton.with_params(params)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let mut input = open_buffered(path)?;
    read_network(&mut input).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
