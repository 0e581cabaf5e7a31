//! Subcommands of the `flowcnn` binary.
//!
//! Every command validates its inputs (paths, sizes, configuration)
//! before any block matching or network work starts. Errors are mapped
//! to exit codes by [`exit_code`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flowcnn::blockmatch::{block_match, BlockMatchConfig};
use flowcnn::data::synthetic::translation_sample;
use flowcnn::data::{
    colorize_flow, load_middlebury, load_sintel, read_flo, read_image, write_flo, write_png, write_ppm,
    Dataset, FlowField, Rgb8Image, SamplePair, SintelPass, SintelSubset, SplitList,
};
use flowcnn::graphs::{build_named, load_network, Network};
use flowcnn::train::{evaluate, FlowPredictor, PrecomputedFlows, TrainConfig, Trainer, TrainingCheckpoint};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "flowcnn", version, about = "Optical flow refinement with convolutional networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write checkpoints plus metrics.csv.
    Train(TrainArgs),
    /// Predict flow for one frame pair.
    Infer(InferArgs),
    /// Compare block matching and a network against ground truth.
    Eval(EvalArgs),
    /// Run block matching on one frame pair.
    Blockmatch(BlockMatchArgs),
    /// Render a .flo file as a colour image.
    Viz(VizArgs),
    /// Print the layers and parameter counts of a network.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainData {
    Sintel,
    Middlebury,
    /// Randomly translated textures generated in memory.
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalData {
    SintelVal,
    Middlebury,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pass {
    Clean,
    Final,
}

impl From<Pass> for SintelPass {
    fn from(p: Pass) -> Self {
        match p {
            Pass::Clean => SintelPass::Clean,
            Pass::Final => SintelPass::Final,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BlockMatchOpts {
    #[arg(long, default_value_t = 9)]
    pub block_size: usize,
    #[arg(long, default_value_t = 15)]
    pub search_radius: usize,
    #[arg(long, default_value_t = 9)]
    pub step: usize,
}

impl BlockMatchOpts {
    fn config(&self) -> Result<BlockMatchConfig> {
        let cfg = BlockMatchConfig {
            block_size: self.block_size,
            search_radius: self.search_radius,
            step: self.step,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Settings are applied in order: built-in defaults, `--config` file,
/// `--set key=value` pairs, then the dedicated flags below.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root; not needed for `--dataset synthetic`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sintel")]
    pub dataset: TrainData,
    #[arg(long, short)]
    pub out: PathBuf,
    /// `plainnet` or `finalnet`.
    #[arg(long)]
    pub net: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_after_half: Option<f64>,
    #[arg(long)]
    pub crop_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, value_enum, default_value = "clean")]
    pub pass: Pass,
    /// Validation list replacing the bundled Sintel split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Use only the first N training pairs.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Continue from a training checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Where block-matching guides are cached; defaults to `<out>/guides`.
    #[arg(long)]
    pub guide_cache: Option<PathBuf>,
    /// Number of generated pairs for `--dataset synthetic`.
    #[arg(long, default_value_t = 8)]
    pub synthetic_pairs: usize,
    /// Frame side for `--dataset synthetic`.
    #[arg(long, default_value_t = 32)]
    pub synthetic_size: usize,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    pub checkpoint: PathBuf,
    pub frame1: PathBuf,
    pub frame2: PathBuf,
    pub out: PathBuf,
    /// Also write a colour rendering (PPM, or PNG by extension).
    #[arg(long)]
    pub viz: Option<PathBuf>,
    #[arg(long)]
    pub max_mag: Option<f32>,
    #[command(flatten)]
    pub bm: BlockMatchOpts,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Network checkpoint; omit when scoring `--pred-dir`.
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "sintel-val")]
    pub dataset: EvalData,
    #[arg(long, value_enum, default_value = "clean")]
    pub pass: Pass,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Score `<dir>/<pair id>.flo` files instead of running a network.
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Directory of cached block-matching guides (`<pair id>.flo`).
    #[arg(long)]
    pub guide_cache: Option<PathBuf>,
    /// Ignore ground truth within this many pixels of the frame edge.
    #[arg(long, default_value_t = 0)]
    pub border: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub bm: BlockMatchOpts,
}

#[derive(Debug, Args)]
pub struct BlockMatchArgs {
    pub frame1: PathBuf,
    pub frame2: PathBuf,
    pub out: PathBuf,
    #[arg(long)]
    pub viz: Option<PathBuf>,
    #[command(flatten)]
    pub bm: BlockMatchOpts,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    pub flow: PathBuf,
    pub out: PathBuf,
    /// Magnitude mapped to full saturation; defaults to the file's maximum.
    #[arg(long)]
    pub max_mag: Option<f32>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Checkpoint to describe.
    #[arg(required_unless_present = "net", conflicts_with = "net")]
    pub checkpoint: Option<PathBuf>,
    /// Describe a freshly built `plainnet` or `finalnet` instead.
    #[arg(long)]
    pub net: Option<String>,
    /// Print per-layer output shapes for a WIDTHxHEIGHT input.
    #[arg(long, value_name = "WxH")]
    pub input: Option<String>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Infer(a) => cmd_infer(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Blockmatch(a) => cmd_blockmatch(&a),
        Command::Viz(a) => cmd_viz(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    }
}

/// 3 for numerical failures, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let numerical = err
        .chain()
        .any(|e| e.downcast_ref::<flowcnn::Error>().is_some_and(|e| e.is_numerical()));
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

fn write_image(path: &Path, img: &Rgb8Image) -> Result<()> {
    let png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if png {
        write_png(path, img)?;
    } else {
        write_ppm(path, img)?;
    }
    Ok(())
}

fn read_pair(f1: &Path, f2: &Path) -> Result<(flowcnn::data::RgbImage, flowcnn::data::RgbImage)> {
    require_file(f1, "frame")?;
    require_file(f2, "frame")?;
    let a = read_image(f1)?;
    let b = read_image(f2)?;
    if (a.width(), a.height()) != (b.width(), b.height()) {
        bail!(
            "frame sizes differ: {} is {}x{}, {} is {}x{}",
            f1.display(),
            a.width(),
            a.height(),
            f2.display(),
            b.width(),
            b.height()
        );
    }
    Ok((a, b))
}

fn load_checkpoint(path: &Path) -> Result<Network> {
    require_file(path, "checkpoint")?;
    load_network(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn split_list(path: Option<&Path>) -> Result<SplitList> {
    Ok(match path {
        Some(p) => SplitList::from_file(p)?,
        None => SplitList::default(),
    })
}

pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            require_file(p, "config file")?;
            TrainConfig::from_file(p)?
        }
        None => TrainConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(n) = &a.net {
        cfg.net = n.clone();
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr_initial = v;
    }
    if let Some(v) = a.lr_after_half {
        cfg.lr_after_half = v;
    }
    if let Some(v) = a.crop_size {
        cfg.crop_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synthetic_set(n: usize, size: usize, seed: u64, bm: &BlockMatchConfig) -> Result<Vec<SamplePair>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let shift = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            Ok(translation_sample(format!("synthetic_{i:04}"), size, size, shift, 4.0, seed + i as u64, bm)?)
        })
        .collect()
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let bm = cfg.block_matching;
    let cache = a.guide_cache.clone().unwrap_or_else(|| a.out.join("guides"));
    let prepare = |mut ds: Dataset| {
        if let Some(n) = a.limit {
            ds.truncate(n);
        }
        ds.with_guide_cache(&cache)
    };
    let (train, val): (Box<dyn flowcnn::train::TrainSource>, Option<Box<dyn flowcnn::train::TrainSource>>) =
        match a.dataset {
            TrainData::Synthetic => {
                let mut pairs = synthetic_set(a.synthetic_pairs, a.synthetic_size, cfg.seed, &bm)?;
                let val = pairs.split_off(pairs.len() - pairs.len() / 4);
                (Box::new(pairs), (!val.is_empty()).then(|| Box::new(val) as _))
            }
            TrainData::Sintel | TrainData::Middlebury => {
                let root = a.data.as_ref().context("--data is required for this dataset")?;
                if a.dataset == TrainData::Sintel {
                    let split = split_list(a.split.as_deref())?;
                    let t = load_sintel(root, a.pass.into(), SintelSubset::Train, &split, bm)?;
                    let v = load_sintel(root, a.pass.into(), SintelSubset::Validation, &split, bm)?;
                    let v = v.with_guide_cache(&cache);
                    (Box::new(prepare(t)), (!v.is_empty()).then(|| Box::new(v) as _))
                } else {
                    let t = load_middlebury(root, bm)?;
                    if !t.all_have_gt() {
                        bail!("every Middlebury training pair needs flow10.flo under {}", root.display());
                    }
                    (Box::new(prepare(t)), None)
                }
            }
        };
    if train.is_empty() {
        bail!("no training pairs found");
    }
    let mut trainer = match &a.resume {
        Some(p) => {
            require_file(p, "checkpoint")?;
            Trainer::resume(TrainingCheckpoint::load(p)?, cfg.clone())?
        }
        None => Trainer::from_config(cfg.clone())?,
    };
    println!(
        "training {} on {} pairs ({} validation), epochs {}..{}",
        trainer.net.name(),
        train.len(),
        val.as_ref().map_or(0, |v| v.len()),
        trainer.epoch + 1,
        cfg.epochs
    );
    let total = cfg.epochs;
    let report = trainer.fit(train.as_ref(), val.as_deref(), Some(&a.out), &mut |m| {
        let val = m.val_epe.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        println!(
            "epoch {:>4}/{total}  lr {:.1e}  NE {:.4}  train EPE {:.4}  val EPE {val}",
            m.epoch,
            cfg.learning_rate(m.epoch),
            m.mean_ne,
            m.train_epe
        );
    })?;
    if let Some(best) = report.best_epoch {
        println!("best epoch {best}; checkpoints in {}", a.out.display());
    }
    Ok(())
}

/// Block matching, network forward pass and crop for one pair.
pub fn infer_pair(net: &Network, f1: &Path, f2: &Path, bm: &BlockMatchConfig) -> Result<FlowField> {
    let (a, b) = read_pair(f1, f2)?;
    let sample = SamplePair::with_block_matching("input", a, b, None, bm)?;
    Ok(net.predict_flow(&sample)?)
}

pub fn cmd_infer(a: &InferArgs) -> Result<()> {
    let bm = a.bm.config()?;
    let net = load_checkpoint(&a.checkpoint)?;
    let flow = infer_pair(&net, &a.frame1, &a.frame2, &bm)?;
    write_flo(&a.out, &flow)?;
    if let Some(v) = &a.viz {
        write_image(v, &colorize_flow(&flow, a.max_mag))?;
    }
    println!("wrote {} ({}x{})", a.out.display(), flow.width(), flow.height());
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let bm = a.bm.config()?;
    let predictor: Box<dyn FlowPredictor> = match (&a.checkpoint, &a.pred_dir) {
        (Some(_), Some(_)) => bail!("give either a checkpoint or --pred-dir, not both"),
        (None, None) => bail!("a checkpoint or --pred-dir is required"),
        (Some(c), None) => Box::new(load_checkpoint(c)?),
        (None, Some(d)) => {
            if !d.is_dir() {
                bail!("prediction directory {} does not exist", d.display());
            }
            Box::new(PrecomputedFlows::new(d))
        }
    };
    let mut ds = match a.dataset {
        EvalData::SintelVal => {
            let split = split_list(a.split.as_deref())?;
            load_sintel(&a.data, a.pass.into(), SintelSubset::Validation, &split, bm)?
        }
        EvalData::Middlebury => load_middlebury(&a.data, bm)?,
    };
    if let Some(n) = a.limit {
        ds.truncate(n);
    }
    if ds.is_empty() {
        bail!("no evaluation pairs found under {}", a.data.display());
    }
    if let Some(e) = ds.entries().iter().find(|e| e.gt.is_none()) {
        bail!("pair {} has no ground-truth flow", e.id);
    }
    if let Some(dir) = &a.guide_cache {
        ds = ds.with_guide_cache(dir);
    }
    let report = evaluate(predictor.as_ref(), &ds, a.border)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.csv {
        report.write_csv(p)?;
    }
    Ok(())
}

pub fn cmd_blockmatch(a: &BlockMatchArgs) -> Result<()> {
    let bm = a.bm.config()?;
    let (f1, f2) = read_pair(&a.frame1, &a.frame2)?;
    let flow = block_match(&f1, &f2, &bm)?;
    write_flo(&a.out, &flow)?;
    if let Some(v) = &a.viz {
        write_image(v, &colorize_flow(&flow, None))?;
    }
    Ok(())
}

pub fn cmd_viz(a: &VizArgs) -> Result<()> {
    if let Some(m) = a.max_mag {
        if !(m.is_finite() && m > 0.0) {
            bail!("--max-mag must be positive, got {m}");
        }
    }
    require_file(&a.flow, "flow file")?;
    let flow = read_flo(&a.flow)?;
    write_image(&a.out, &colorize_flow(&flow, a.max_mag))
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

pub fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let size = a.input.as_deref().map(parse_size).transpose()?;
    let net = match (&a.checkpoint, &a.net) {
        (Some(p), _) => {
            require_file(p, "checkpoint")?;
            if let Ok(ckpt) = TrainingCheckpoint::load(p) {
                println!("training checkpoint after epoch {}", ckpt.epoch);
                if let Some(last) = ckpt.history.last() {
                    println!("last train EPE {:.4}", last.train_epe);
                }
            }
            load_checkpoint(p)?
        }
        (None, Some(name)) => build_named(name, 0)?,
        (None, None) => bail!("a checkpoint or --net is required"),
    };
    println!("{}", net.name());
    let shapes = match size {
        Some((w, h)) => Some(net.layer_output_shapes([1, h, w, net.in_channels()])?),
        None => None,
    };
    for (i, l) in net.layers().iter().enumerate() {
        let mut line = format!("{i:>3}  {:<12} {:>4}", l.kind.name(), l.c_out);
        if let Some(s) = l.skip_source {
            line.push_str(&format!("  skip {s}"));
        }
        if let Some(sh) = &shapes {
            line.push_str(&format!("  -> {}x{}x{}", sh[i][2], sh[i][1], sh[i][3]));
        }
        println!("{line}");
    }
    println!("{}", net.parameter_report());
    Ok(())
}
