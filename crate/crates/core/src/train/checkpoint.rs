//! Training checkpoints: a network checkpoint followed by optimizer state
//! and the metric history.
//!
//! The trailer is the magic bytes `FLWS`, the epoch (`u32`), the number of
//! velocity buffers (`u32`) and the buffers as `(1, 1, 1, len)` tensors,
//! then the history length (`u32`) and per epoch a `u32` epoch number and
//! three `f64` values: mean NE, train EPE and validation EPE (NaN when no
//! validation set was used). Integers and floats are little-endian.
//!
//! Shuffling and augmentation are derived from the seed and the epoch
//! number, so no generator state is stored.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use super::sgd::Momentum;
use super::EpochMetrics;
use crate::data::open_buffered;
use crate::error::{Error, Result};
use crate::graphs::{read_network, write_network, Network};
use crate::tensor::Tensor;

pub const TRAINING_MAGIC: [u8; 4] = *b"FLWS";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCheckpoint {
    /// Number of completed epochs.
    pub epoch: usize,
    pub network: Network,
    pub momentum: Momentum,
    pub history: Vec<EpochMetrics>,
}

fn u32_of(v: usize, what: &str) -> io::Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, format!("{what} exceeds u32")))
}

impl TrainingCheckpoint {
    pub fn write_to(&self, out: &mut impl Write) -> io::Result<()> {
        write_network(out, &self.network)?;
        out.write_all(&TRAINING_MAGIC)?;
        out.write_all(&u32_of(self.epoch, "epoch")?)?;
        out.write_all(&u32_of(self.momentum.velocity.len(), "buffer count")?)?;
        for v in &self.momentum.velocity {
            Tensor::from_vec([1, 1, 1, v.len()], v.clone())
                .expect("length matches shape")
                .write_to(out)?;
        }
        out.write_all(&u32_of(self.history.len(), "history length")?)?;
        for m in &self.history {
            out.write_all(&u32_of(m.epoch, "epoch")?)?;
            for x in [m.mean_ne, m.train_epe, m.val_epe.unwrap_or(f64::NAN)] {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let network = read_network(input)?;
        let bad = |m: String| Error::Format(format!("training checkpoint: {m}"));
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|_| bad("no training state (network-only checkpoint?)".into()))?;
        if magic != TRAINING_MAGIC {
            return Err(bad("bad training-state magic".into()));
        }
        let read_u32 = |input: &mut dyn Read, what: &str| -> Result<usize> {
            let mut b = [0u8; 4];
            input
                .read_exact(&mut b)
                .map_err(|e| bad(format!("{what}: {e}")))?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        let epoch = read_u32(input, "epoch")?;
        let count = read_u32(input, "buffer count")?;
        let lengths = network.param_lengths();
        if count != lengths.len() {
            return Err(bad(format!(
                "{count} velocity buffers for {} parameter buffers",
                lengths.len()
            )));
        }
        let mut velocity = Vec::with_capacity(count);
        for (i, len) in lengths.into_iter().enumerate() {
            let t = Tensor::read_from(input).map_err(|e| bad(format!("velocity {i}: {e}")))?;
            if t.shape() != [1, 1, 1, len] {
                return Err(bad(format!("velocity {i} has shape {:?}", t.shape())));
            }
            velocity.push(t.into_vec());
        }
        let rows = read_u32(input, "history length")?;
        let mut history = Vec::with_capacity(rows.min(1 << 16));
        for _ in 0..rows {
            let epoch = read_u32(input, "history epoch")?;
            let mut vals = [0f64; 3];
            for v in &mut vals {
                let mut b = [0u8; 8];
                input
                    .read_exact(&mut b)
                    .map_err(|e| bad(format!("history: {e}")))?;
                *v = f64::from_le_bytes(b);
            }
            history.push(EpochMetrics {
                epoch,
                mean_ne: vals[0],
                train_epe: vals[1],
                val_epe: (!vals[2].is_nan()).then_some(vals[2]),
            });
        }
        Ok(TrainingCheckpoint {
            epoch,
            network,
            momentum: Momentum { velocity },
            history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut input = open_buffered(path)?;
        Self::read_from(&mut input).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
