//! Mini-batch SGD training with momentum, checkpointing, metric logging
//! and evaluation.
//!
//! The loss of a batch is the mean of the per-sample NE values. Every
//! epoch visits the training set once in an order drawn from the seed and
//! the epoch number; crops and flips come from the same stream, so a run
//! is reproducible and can be resumed from any checkpoint.
//!
//! Files written to the output directory:
//!
//! - `config.txt`: the effective configuration;
//! - `metrics.csv`: columns `epoch,train_epe,val_epe`, one row per epoch
//!   (`val_epe` is empty without a validation set);
//! - `last.ckpt` after every epoch, `best.ckpt` whenever the selection
//!   metric (validation EPE, or train EPE without validation) improves,
//!   and `epoch_NNNN.ckpt` every `checkpoint_every` epochs.

mod checkpoint;
mod config;
mod eval;
mod sgd;

pub use checkpoint::{TrainingCheckpoint, TRAINING_MAGIC};
pub use config::TrainConfig;
pub use eval::{evaluate, mask_border, EvalReport, EvalRow, FlowPredictor, PrecomputedFlows};
pub use sgd::{sgd_momentum_step, Momentum};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{assemble_batch, crop_output, Dataset, SamplePair, SIZE_MULTIPLE};
use crate::error::{Error, Result};
use crate::graphs::{build_named, Network};
use crate::layers::Mode;
use crate::loss::{average_epe, GradientScheme, NeConfig, NeTarget};
use crate::tensor::Tensor;

/// Indexed access to samples; implemented for in-memory slices and for
/// lazily loaded datasets.
pub trait TrainSource {
    fn len(&self) -> usize;
    fn sample(&self, index: usize) -> Result<SamplePair>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TrainSource for [SamplePair] {
    fn len(&self) -> usize {
        <[SamplePair]>::len(self)
    }
    fn sample(&self, index: usize) -> Result<SamplePair> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::Input(format!("sample index {index} out of range")))
    }
}

impl TrainSource for Vec<SamplePair> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn sample(&self, index: usize) -> Result<SamplePair> {
        self.as_slice().sample(index)
    }
}

impl TrainSource for Dataset {
    fn len(&self) -> usize {
        Dataset::len(self)
    }
    fn sample(&self, index: usize) -> Result<SamplePair> {
        self.load(index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean of the per-batch losses.
    pub mean_ne: f64,
    /// Mean per-sample EPE of the training forward passes.
    pub train_epe: f64,
    pub val_epe: Option<f64>,
}

/// Result of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Mean NE over the batch, before the update.
    pub loss: f64,
    /// Mean per-sample EPE over the batch, before the update.
    pub epe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Batch losses in the order they were computed.
    pub iteration_losses: Vec<f64>,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
}

/// Renders the metrics CSV.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,train_epe,val_epe\n");
    for m in history {
        let val = m.val_epe.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", m.epoch, m.train_epe, val);
    }
    s
}

fn selection_metric(m: &EpochMetrics) -> f64 {
    m.val_epe.unwrap_or(m.train_epe)
}

/// Owns a network and its optimiser state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: Network,
    pub momentum: Momentum,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
    cfg: TrainConfig,
    ne: NeConfig,
}

impl Trainer {
    pub fn new(net: Network, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let momentum = Momentum::zeros(&net);
        let ne = NeConfig {
            epsilon: cfg.ne_epsilon,
            gradient_scheme: GradientScheme::Central,
        };
        Ok(Trainer {
            net,
            momentum,
            epoch: 0,
            history: Vec::new(),
            cfg,
            ne,
        })
    }

    /// A fresh network of the configured architecture, seeded by `cfg.seed`.
    pub fn from_config(cfg: TrainConfig) -> Result<Self> {
        let net = build_named(&cfg.net, cfg.seed)?;
        Self::new(net, cfg)
    }

    pub fn resume(ckpt: TrainingCheckpoint, cfg: TrainConfig) -> Result<Self> {
        if ckpt.momentum.velocity.len() != ckpt.network.param_lengths().len() {
            return Err(Error::State("checkpoint velocity does not match its network".into()));
        }
        let mut t = Self::new(ckpt.network, cfg)?;
        t.momentum = ckpt.momentum;
        t.epoch = ckpt.epoch;
        t.history = ckpt.history;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn checkpoint(&self) -> TrainingCheckpoint {
        TrainingCheckpoint {
            epoch: self.epoch,
            network: self.net.clone(),
            momentum: self.momentum.clone(),
            history: self.history.clone(),
        }
    }

    /// Forward, loss, backward and update on one batch of equally sized
    /// samples. `label` names the batch in error messages.
    pub fn train_step(&mut self, batch: &[SamplePair], lr: f64, label: &str) -> Result<StepOutcome> {
        let targets = batch
            .iter()
            .map(|s| NeTarget::new(s.require_gt()?, &self.ne))
            .collect::<Result<Vec<_>>>()?;
        let (x, crop) = assemble_batch(batch)?;
        let (out, cache) = self.net.forward(&x, Mode::Train)?;
        let mut grad = Tensor::zeros(out.shape())?;
        let scale = 1.0 / batch.len() as f64;
        let (mut loss, mut epe) = (0.0, 0.0);
        for (b, (s, t)) in batch.iter().zip(&targets).enumerate() {
            loss += t.loss_and_grad_tensor(&out, b, crop.x0, crop.y0, scale, &mut grad)? * scale;
            epe += average_epe(&crop_output(&out, b, crop)?, s.require_gt()?)? * scale;
        }
        if !loss.is_finite() {
            let ids: Vec<&str> = batch.iter().map(|s| s.id.as_str()).collect();
            return Err(Error::NonFinite(format!(
                "loss {loss} at {label} (samples {})",
                ids.join(", ")
            )));
        }
        let grads = self.net.backward(cache, &grad)?;
        self.momentum.step(&mut self.net, &grads, lr, self.cfg.momentum)?;
        Ok(StepOutcome { loss, epe })
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64);
        rng
    }

    /// Crops a batch to a common size (at most `crop_size` per side, and a
    /// multiple of the padding unit when large enough) at random offsets,
    /// and flips each sample with probability 1/2 when enabled.
    fn augment(&self, samples: Vec<SamplePair>, rng: &mut ChaCha8Rng) -> Result<Vec<SamplePair>> {
        let mut tw = samples.iter().map(SamplePair::width).min().unwrap_or(0);
        let mut th = samples.iter().map(SamplePair::height).min().unwrap_or(0);
        if self.cfg.crop_size > 0 {
            tw = tw.min(self.cfg.crop_size);
            th = th.min(self.cfg.crop_size);
        }
        let round = |v: usize| if v >= SIZE_MULTIPLE { v - v % SIZE_MULTIPLE } else { v };
        let (tw, th) = (round(tw), round(th));
        samples
            .into_iter()
            .map(|s| {
                let x0 = rng.gen_range(0..=s.width() - tw);
                let y0 = rng.gen_range(0..=s.height() - th);
                let s = if (tw, th) == (s.width(), s.height()) { s } else { s.crop(x0, y0, tw, th)? };
                Ok(if self.cfg.flip && rng.gen_bool(0.5) { s.flip_horizontal() } else { s })
            })
            .collect()
    }

    /// Runs the next epoch; returns its metrics and the batch losses.
    pub fn run_epoch(
        &mut self,
        train: &dyn TrainSource,
        val: Option<&dyn TrainSource>,
    ) -> Result<(EpochMetrics, Vec<f64>)> {
        if train.is_empty() {
            return Err(Error::Input("the training set is empty".into()));
        }
        let epoch = self.epoch + 1;
        let lr = self.cfg.learning_rate(epoch);
        let mut rng = self.epoch_rng(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        let (mut epe_sum, mut count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let samples = chunk
                .iter()
                .map(|&i| train.sample(i))
                .collect::<Result<Vec<_>>>()?;
            let samples = self.augment(samples, &mut rng)?;
            let label = format!("epoch {epoch}, batch {}", b + 1);
            let step = self.train_step(&samples, lr, &label)?;
            losses.push(step.loss);
            epe_sum += step.epe * chunk.len() as f64;
            count += chunk.len();
        }
        let val_epe = match val {
            Some(v) if !v.is_empty() => Some(mean_epe(&self.net, v)?),
            _ => None,
        };
        let metrics = EpochMetrics {
            epoch,
            mean_ne: losses.iter().sum::<f64>() / losses.len() as f64,
            train_epe: epe_sum / count as f64,
            val_epe,
        };
        self.epoch = epoch;
        self.history.push(metrics.clone());
        Ok((metrics, losses))
    }

    /// Trains until `cfg.epochs` epochs are complete. With an output
    /// directory, writes the files listed in the module docs.
    pub fn fit(
        &mut self,
        train: &dyn TrainSource,
        val: Option<&dyn TrainSource>,
        out_dir: Option<&Path>,
        on_epoch: &mut dyn FnMut(&EpochMetrics),
    ) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::Input("the training set is empty".into()));
        }
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_file(&dir.join("config.txt"), &self.cfg.to_config_string())?;
        }
        let mut best = self
            .history
            .iter()
            .min_by(|a, b| selection_metric(a).total_cmp(&selection_metric(b)))
            .map(|m| (m.epoch, selection_metric(m)));
        let mut iteration_losses = Vec::new();
        while self.epoch < self.cfg.epochs {
            let (m, losses) = self.run_epoch(train, val)?;
            iteration_losses.extend(losses);
            let improved = best.is_none_or(|(_, b)| selection_metric(&m) < b);
            if improved {
                best = Some((m.epoch, selection_metric(&m)));
            }
            if let Some(dir) = out_dir {
                let ckpt = self.checkpoint();
                ckpt.save(dir.join("last.ckpt"))?;
                if improved {
                    ckpt.save(dir.join("best.ckpt"))?;
                }
                if self.cfg.checkpoint_every > 0 && m.epoch % self.cfg.checkpoint_every == 0 {
                    ckpt.save(epoch_checkpoint_path(dir, m.epoch))?;
                }
                write_file(&dir.join("metrics.csv"), &metrics_csv(&self.history))?;
            }
            on_epoch(&m);
        }
        Ok(TrainReport {
            iteration_losses,
            history: self.history.clone(),
            best_epoch: best.map(|(e, _)| e),
        })
    }
}

pub fn epoch_checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.ckpt"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Mean per-sample EPE of inference-mode predictions at full resolution.
pub fn mean_epe(net: &Network, source: &dyn TrainSource) -> Result<f64> {
    let report = evaluate(net, source, 0)?;
    Ok(report.mean_network())
}
