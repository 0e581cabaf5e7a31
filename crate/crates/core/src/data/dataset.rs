//! Sample pairs and the Sintel / Middlebury directory loaders.
//!
//! Layouts:
//!
//! ```text
//! sintel/<pass>/<scene>/frame_NNNN.png      pass = clean | final
//! sintel/flow/<scene>/frame_NNNN.flo        flow from frame N to N+1
//!
//! middlebury/<seq>/frame10.png
//! middlebury/<seq>/frame11.png
//! middlebury/<seq>/flow10.flo               optional ground truth
//! ```
//!
//! Loaders only list files; images are read and the block-matching guide
//! computed when a pair is fetched with [`Dataset::load`].

use std::fs;
use std::path::{Path, PathBuf};

use super::flo::{read_flo, write_flo};
use super::image::read_image;
use super::{FlowField, RgbImage};
use crate::blockmatch::{block_match, BlockMatchConfig};
use crate::error::{Error, Result};

/// Two frames, the guide flow between them, and ground truth when known.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub id: String,
    pub frame1: RgbImage,
    pub frame2: RgbImage,
    pub approx_flow: FlowField,
    pub gt_flow: Option<FlowField>,
}

impl SamplePair {
    pub fn new(
        id: impl Into<String>,
        frame1: RgbImage,
        frame2: RgbImage,
        approx_flow: FlowField,
        gt_flow: Option<FlowField>,
    ) -> Result<Self> {
        let id = id.into();
        let (w, h) = (frame1.width(), frame1.height());
        let sizes_match = frame2.width() == w
            && frame2.height() == h
            && approx_flow.width() == w
            && approx_flow.height() == h
            && gt_flow.as_ref().is_none_or(|g| g.width() == w && g.height() == h);
        if !sizes_match {
            return Err(Error::Input(format!(
                "sample {id}: frames and flows disagree on size"
            )));
        }
        Ok(SamplePair {
            id,
            frame1,
            frame2,
            approx_flow,
            gt_flow,
        })
    }

    /// Builds a sample whose guide is block matching between the frames.
    pub fn with_block_matching(
        id: impl Into<String>,
        frame1: RgbImage,
        frame2: RgbImage,
        gt_flow: Option<FlowField>,
        cfg: &BlockMatchConfig,
    ) -> Result<Self> {
        let approx = block_match(&frame1, &frame2, cfg)?;
        Self::new(id, frame1, frame2, approx, gt_flow)
    }

    pub fn width(&self) -> usize {
        self.frame1.width()
    }
    pub fn height(&self) -> usize {
        self.frame1.height()
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        Ok(SamplePair {
            id: self.id.clone(),
            frame1: self.frame1.crop(x0, y0, width, height)?,
            frame2: self.frame2.crop(x0, y0, width, height)?,
            approx_flow: self.approx_flow.crop(x0, y0, width, height)?,
            gt_flow: self
                .gt_flow
                .as_ref()
                .map(|g| g.crop(x0, y0, width, height))
                .transpose()?,
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        SamplePair {
            id: self.id.clone(),
            frame1: self.frame1.flip_horizontal(),
            frame2: self.frame2.flip_horizontal(),
            approx_flow: self.approx_flow.flip_horizontal(),
            gt_flow: self.gt_flow.as_ref().map(FlowField::flip_horizontal),
        }
    }

    pub fn require_gt(&self) -> Result<&FlowField> {
        self.gt_flow
            .as_ref()
            .ok_or_else(|| Error::Load(format!("pair {} has no ground-truth flow", self.id)))
    }
}

/// File locations of one frame pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEntry {
    pub id: String,
    pub frame1: PathBuf,
    pub frame2: PathBuf,
    pub gt: Option<PathBuf>,
}

/// A lazily loaded, deterministically ordered list of frame pairs.
#[derive(Debug, Clone)]
pub struct Dataset {
    entries: Vec<PairEntry>,
    block_matching: BlockMatchConfig,
    guide_cache: Option<PathBuf>,
}

impl Dataset {
    pub fn from_entries(entries: Vec<PairEntry>, block_matching: BlockMatchConfig) -> Self {
        Dataset {
            entries,
            block_matching,
            guide_cache: None,
        }
    }

    /// Store and reuse guide flows as `.flo` files under `dir/<id>.flo`.
    pub fn with_guide_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.guide_cache = Some(dir.into());
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }
    pub fn block_matching(&self) -> &BlockMatchConfig {
        &self.block_matching
    }

    /// Keeps the first `n` pairs.
    pub fn truncate(&mut self, n: usize) {
        self.entries.truncate(n);
    }

    pub fn all_have_gt(&self) -> bool {
        self.entries.iter().all(|e| e.gt.is_some())
    }

    pub fn load(&self, index: usize) -> Result<SamplePair> {
        let e = self
            .entries
            .get(index)
            .ok_or_else(|| Error::Input(format!("pair index {index} out of range")))?;
        let frame1 = read_image(&e.frame1)?;
        let frame2 = read_image(&e.frame2)?;
        let gt = e.gt.as_ref().map(read_flo).transpose()?;
        let approx = self.guide(&e.id, &frame1, &frame2)?;
        SamplePair::new(e.id.clone(), frame1, frame2, approx, gt)
    }

    fn guide(&self, id: &str, f1: &RgbImage, f2: &RgbImage) -> Result<FlowField> {
        let Some(dir) = &self.guide_cache else {
            return block_match(f1, f2, &self.block_matching);
        };
        let path = dir.join(format!("{id}.flo"));
        if path.is_file() {
            let cached = read_flo(&path)?;
            if cached.width() == f1.width() && cached.height() == f1.height() {
                return Ok(cached);
            }
        }
        let flow = block_match(f1, f2, &self.block_matching)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_flo(&path, &flow)?;
        Ok(flow)
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<SamplePair>> + '_ {
        (0..self.len()).map(|i| self.load(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SintelPass {
    #[default]
    Clean,
    Final,
}

impl SintelPass {
    pub fn dir_name(self) -> &'static str {
        match self {
            SintelPass::Clean => "clean",
            SintelPass::Final => "final",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SintelSubset {
    All,
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SplitEntry {
    scene: String,
    frames: Option<(u32, u32)>,
}

/// Scene-level list of validation pairs; see `splits/sintel_validation.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitList {
    validation: Vec<SplitEntry>,
}

const DEFAULT_SPLIT: &str = include_str!("../../splits/sintel_validation.txt");

impl Default for SplitList {
    fn default() -> Self {
        SplitList::parse(DEFAULT_SPLIT).expect("bundled split list parses")
    }
}

impl SplitList {
    pub fn parse(text: &str) -> Result<Self> {
        let mut validation = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let scene = parts.next().unwrap_or_default().to_string();
            let frames = match parts.next() {
                None => None,
                Some(range) => {
                    let bad = || Error::Config(format!("split line {}: bad range {range:?}", n + 1));
                    let (a, b) = range.split_once('-').ok_or_else(bad)?;
                    let a: u32 = a.parse().map_err(|_| bad())?;
                    let b: u32 = b.parse().map_err(|_| bad())?;
                    if a > b {
                        return Err(bad());
                    }
                    Some((a, b))
                }
            };
            if parts.next().is_some() {
                return Err(Error::Config(format!("split line {}: trailing fields", n + 1)));
            }
            validation.push(SplitEntry { scene, frames });
        }
        Ok(SplitList { validation })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn is_validation(&self, scene: &str, frame: u32) -> bool {
        self.validation.iter().any(|e| {
            e.scene == scene && e.frames.is_none_or(|(a, b)| (a..=b).contains(&frame))
        })
    }
}

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

/// Frame number of `frame_NNNN.png`.
fn sintel_frame_number(path: &Path) -> Option<u32> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix("frame_")?.strip_suffix(".png")?.parse().ok()
}

pub fn load_sintel(
    root: impl AsRef<Path>,
    pass: SintelPass,
    subset: SintelSubset,
    split: &SplitList,
    block_matching: BlockMatchConfig,
) -> Result<Dataset> {
    let root = root.as_ref();
    let frames_root = root.join(pass.dir_name());
    let flow_root = root.join("flow");
    for dir in [&frames_root, &flow_root] {
        if !dir.is_dir() {
            return Err(Error::Load(format!(
                "expected directory {} is missing",
                dir.display()
            )));
        }
    }
    let mut entries = Vec::new();
    for scene_dir in sorted_dir(&frames_root)?.into_iter().filter(|p| p.is_dir()) {
        let scene = scene_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Load(format!("bad scene name {}", scene_dir.display())))?
            .to_string();
        let mut frames: Vec<(u32, PathBuf)> = sorted_dir(&scene_dir)?
            .into_iter()
            .filter_map(|p| sintel_frame_number(&p).map(|n| (n, p)))
            .collect();
        frames.sort();
        for pair in frames.windows(2) {
            let ((n1, p1), (n2, p2)) = (&pair[0], &pair[1]);
            if n2 != &(n1 + 1) {
                continue;
            }
            let include = match subset {
                SintelSubset::All => true,
                SintelSubset::Train => !split.is_validation(&scene, *n1),
                SintelSubset::Validation => split.is_validation(&scene, *n1),
            };
            if !include {
                continue;
            }
            let id = format!("{scene}/frame_{n1:04}");
            let gt = flow_root.join(&scene).join(format!("frame_{n1:04}.flo"));
            if !gt.is_file() {
                return Err(Error::Load(format!(
                    "pair {id} has no ground truth at {}",
                    gt.display()
                )));
            }
            entries.push(PairEntry {
                id,
                frame1: p1.clone(),
                frame2: p2.clone(),
                gt: Some(gt),
            });
        }
    }
    Ok(Dataset::from_entries(entries, block_matching))
}

pub fn load_middlebury(root: impl AsRef<Path>, block_matching: BlockMatchConfig) -> Result<Dataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Load(format!(
            "expected directory {} is missing",
            root.display()
        )));
    }
    let mut entries = Vec::new();
    for seq in sorted_dir(root)?.into_iter().filter(|p| p.is_dir()) {
        let (f1, f2) = (seq.join("frame10.png"), seq.join("frame11.png"));
        if !f1.is_file() || !f2.is_file() {
            continue;
        }
        let gt = seq.join("flow10.flo");
        entries.push(PairEntry {
            id: seq
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string(),
            frame1: f1,
            frame2: f2,
            gt: gt.is_file().then_some(gt),
        });
    }
    Ok(Dataset::from_entries(entries, block_matching))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_split_parses() {
        let s = SplitList::default();
        assert!(s.is_validation("market_6", 1));
        assert!(s.is_validation("cave_4", 29));
        assert!(!s.is_validation("cave_4", 28));
        assert!(!s.is_validation("alley_1", 5));
    }

    #[test]
    fn bad_split_lines_rejected() {
        assert!(SplitList::parse("alley_1 9-3").is_err());
        assert!(SplitList::parse("alley_1 x").is_err());
        assert!(SplitList::parse("alley_1 1-2 extra").is_err());
    }

    #[test]
    fn sample_size_mismatch_rejected() {
        let f = RgbImage::new(4, 4);
        let err = SamplePair::new("x", f.clone(), f, FlowField::zeros(4, 3), None).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }
}
