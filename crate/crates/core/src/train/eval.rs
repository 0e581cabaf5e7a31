//! Per-sample endpoint-error evaluation against the block-matching guide.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::TrainSource;
use crate::data::{assemble_input, crop_output, read_flo, FlowField, SamplePair};
use crate::error::{Error, Result};
use crate::graphs::Network;
use crate::loss::average_epe;

/// Anything that turns a sample into a flow estimate.
pub trait FlowPredictor {
    fn predict_flow(&self, sample: &SamplePair) -> Result<FlowField>;
}

impl FlowPredictor for Network {
    fn predict_flow(&self, sample: &SamplePair) -> Result<FlowField> {
        let input = assemble_input(sample)?;
        let out = self.predict(&input.tensor)?;
        crop_output(&out, 0, input.crop)
    }
}

/// Predictions read from `<dir>/<sample id>.flo`.
#[derive(Debug, Clone)]
pub struct PrecomputedFlows {
    pub dir: PathBuf,
}

impl PrecomputedFlows {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PrecomputedFlows { dir: dir.into() }
    }

    pub fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.flo"))
    }
}

impl FlowPredictor for PrecomputedFlows {
    fn predict_flow(&self, sample: &SamplePair) -> Result<FlowField> {
        let flow = read_flo(self.path_for(&sample.id))?;
        if flow.width() != sample.width() || flow.height() != sample.height() {
            return Err(Error::Input(format!(
                "{}: prediction is {}x{}, frames are {}x{}",
                sample.id,
                flow.width(),
                flow.height(),
                sample.width(),
                sample.height()
            )));
        }
        Ok(flow)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub block_matching_epe: f64,
    pub network_epe: f64,
    /// `network_epe - block_matching_epe`; negative when the network helps.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl EvalReport {
    pub fn mean_block_matching(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.block_matching_epe))
    }

    pub fn mean_network(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.network_epe))
    }

    pub fn mean_delta(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.delta))
    }

    /// One row per sample and a final `MEAN` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,block_matching_epe,network_epe,delta\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.id, r.block_matching_epe, r.network_epe, r.delta);
        }
        let _ = writeln!(
            s,
            "MEAN,{},{},{}",
            self.mean_block_matching(),
            self.mean_network(),
            self.mean_delta()
        );
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Aligned text table for terminals.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.id.len()).max().unwrap_or(0).max(4);
        let mut s = format!(
            "{:<width$}  {:>14}  {:>11}  {:>9}\n",
            "id", "block matching", "network", "delta"
        );
        let mut line = |id: &str, a: f64, b: f64, d: f64| {
            let _ = writeln!(s, "{id:<width$}  {a:>14.4}  {b:>11.4}  {d:>+9.4}");
        };
        for r in &self.rows {
            line(&r.id, r.block_matching_epe, r.network_epe, r.delta);
        }
        line("MEAN", self.mean_block_matching(), self.mean_network(), self.mean_delta());
        s
    }
}

/// `gt` with every pixel closer than `border` to an edge marked invalid.
pub fn mask_border(gt: &FlowField, border: usize) -> FlowField {
    let mut out = gt.clone();
    let (w, h) = (gt.width(), gt.height());
    for y in 0..h {
        for x in 0..w {
            if x < border || y < border || x + border >= w || y + border >= h {
                out.set_valid(x, y, false);
            }
        }
    }
    out
}

/// Average EPE of the predictor and of the block-matching guide on every
/// sample, over valid ground-truth pixels at least `border` pixels inside
/// the frame.
pub fn evaluate(
    predictor: &dyn FlowPredictor,
    source: &dyn TrainSource,
    border: usize,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let s = source.sample(i)?;
        let gt = mask_border(s.require_gt()?, border);
        if gt.valid_count() == 0 {
            return Err(Error::Input(format!(
                "{}: no valid ground truth at least {border} pixels from the border",
                s.id
            )));
        }
        let pred = predictor.predict_flow(&s)?;
        let bm = average_epe(&s.approx_flow, &gt)?;
        let net = average_epe(&pred, &gt)?;
        rows.push(EvalRow {
            id: s.id.clone(),
            block_matching_epe: bm,
            network_epe: net,
            delta: net - bm,
        });
    }
    Ok(EvalReport { rows })
}
