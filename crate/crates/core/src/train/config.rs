//! Training configuration and its flat `key = value` file format.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::blockmatch::BlockMatchConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// `plainnet` or `finalnet`.
    pub net: String,
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Learning rate once more than half of the epochs are done.
    pub lr_after_half: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Write a numbered checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Side of the random training crops; 0 trains on whole frames.
    pub crop_size: usize,
    /// Random horizontal flips of training pairs.
    pub flip: bool,
    /// The NE loss's stabiliser added to the ground-truth gradient energy.
    pub ne_epsilon: f64,
    pub block_matching: BlockMatchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            net: "finalnet".into(),
            batch_size: 6,
            lr_initial: 1e-7,
            lr_after_half: 1e-8,
            momentum: 0.9,
            epochs: 200,
            seed: 0,
            checkpoint_every: 10,
            crop_size: 256,
            flip: true,
            ne_epsilon: 1e-2,
            block_matching: BlockMatchConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 14] = [
        "net",
        "batch_size",
        "lr_initial",
        "lr_after_half",
        "momentum",
        "epochs",
        "seed",
        "checkpoint_every",
        "crop_size",
        "flip",
        "ne_epsilon",
        "block_size",
        "search_radius",
        "block_step",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "net" => self.net = value.to_ascii_lowercase(),
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr_initial" => self.lr_initial = parse(key, value)?,
            "lr_after_half" => self.lr_after_half = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "crop_size" => self.crop_size = parse(key, value)?,
            "flip" => self.flip = parse_bool(key, value)?,
            "ne_epsilon" => self.ne_epsilon = parse(key, value)?,
            "block_size" => self.block_matching.block_size = parse(key, value)?,
            "search_radius" => self.block_matching.search_radius = parse(key, value)?,
            "block_step" => self.block_matching.step = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !matches!(self.net.as_str(), "plainnet" | "finalnet") {
            return bad(format!("net must be plainnet or finalnet, got {:?}", self.net));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        for (name, lr) in [("lr_initial", self.lr_initial), ("lr_after_half", self.lr_after_half)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.ne_epsilon > 0.0 && self.ne_epsilon.is_finite()) {
            return bad(format!("ne_epsilon must be positive, got {}", self.ne_epsilon));
        }
        self.block_matching.validate()
    }

    /// Learning rate for a 1-based epoch: `lr_initial` for the first
    /// `ceil(epochs / 2)` epochs, `lr_after_half` afterwards.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch <= self.epochs.div_ceil(2) {
            self.lr_initial
        } else {
            self.lr_after_half
        }
    }

    /// The configuration in the file format; parsing it gives `self` back.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let b = &self.block_matching;
        let _ = writeln!(s, "net = {}", self.net);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "lr_initial = {:e}", self.lr_initial);
        let _ = writeln!(s, "lr_after_half = {:e}", self.lr_after_half);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "crop_size = {}", self.crop_size);
        let _ = writeln!(s, "flip = {}", self.flip);
        let _ = writeln!(s, "ne_epsilon = {:e}", self.ne_epsilon);
        let _ = writeln!(s, "block_size = {}", b.block_size);
        let _ = writeln!(s, "search_radius = {}", b.search_radius);
        let _ = writeln!(s, "block_step = {}", b.step);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn half_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(1), 1e-7);
        assert_eq!(cfg.learning_rate(100), 1e-7);
        assert_eq!(cfg.learning_rate(101), 1e-8);
        assert_eq!(cfg.learning_rate(200), 1e-8);
        let odd = TrainConfig { epochs: 5, ..cfg };
        assert_eq!(odd.learning_rate(3), odd.lr_initial);
        assert_eq!(odd.learning_rate(4), odd.lr_after_half);
    }

    #[test]
    fn file_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.apply_str("# comment\n\nnet = PlainNet\nlr_initial=3e-4\nflip = no\nblock_step = 4\n")
            .unwrap();
        assert_eq!(cfg.net, "plainnet");
        assert_eq!(cfg.lr_initial, 3e-4);
        assert!(!cfg.flip);
        assert_eq!(cfg.block_matching.step, 4);
        assert_eq!(TrainConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
        for key in TrainConfig::KEYS {
            assert!(cfg.to_config_string().contains(&format!("{key} = ")));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(TrainConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(TrainConfig::parse("epochs").is_err());
        assert!(TrainConfig::parse("batch_size = 0").is_err());
        assert!(TrainConfig::parse("lr_initial = -1").is_err());
        assert!(TrainConfig::parse("momentum = 1.5").is_err());
        assert!(TrainConfig::parse("net = resnet").is_err());
        assert!(TrainConfig::parse("block_size = 4").is_err());
    }
}
