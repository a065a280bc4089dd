//! Detector and classifier backend interfaces plus the scripted and trivial
//! implementations used for simulation and tests.
//!
//! Real model runtimes plug in by implementing [`Detector`] or [`Classifier`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{scale_box, BoundingBox, FrameSize};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectClass {
    Gun,
}

/// One detector output: a box with a confidence score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub class: ObjectClass,
}

impl Detection {
    pub fn gun(bbox: BoundingBox, score: f64) -> Self {
        Self {
            bbox,
            score,
            class: ObjectClass::Gun,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend failure: {0}")]
    Runtime(String),
    #[error("backend returned score {0} outside [0, 1]")]
    ScoreRange(f64),
    #[error("backend returned box {bbox} outside frame {frame}")]
    BoxOutsideFrame { bbox: BoundingBox, frame: FrameSize },
}

/// Per-frame facts passed alongside the (possibly downscaled) detector input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameContext {
    pub index: u64,
    pub timestamp_ms: i64,
    /// Resolution of the original frame before downscaling.
    pub full_size: FrameSize,
}

pub trait Detector {
    /// Boxes must lie within `frame`, in `frame`'s own coordinates.
    fn detect(&mut self, frame: &Image, ctx: &FrameContext) -> Result<Vec<Detection>, BackendError>;
}

pub trait Classifier {
    /// Gun score for a chip, in `[0, 1]`.
    fn classify(&mut self, chip: &Image) -> Result<f64, BackendError>;
}

impl<T: Detector + ?Sized> Detector for &mut T {
    fn detect(&mut self, frame: &Image, ctx: &FrameContext) -> Result<Vec<Detection>, BackendError> {
        (**self).detect(frame, ctx)
    }
}

impl<T: Classifier + ?Sized> Classifier for &mut T {
    fn classify(&mut self, chip: &Image) -> Result<f64, BackendError> {
        (**self).classify(chip)
    }
}

impl<T: Detector + ?Sized> Detector for alloc::boxed::Box<T> {
    fn detect(&mut self, frame: &Image, ctx: &FrameContext) -> Result<Vec<Detection>, BackendError> {
        (**self).detect(frame, ctx)
    }
}

impl<T: Classifier + ?Sized> Classifier for alloc::boxed::Box<T> {
    fn classify(&mut self, chip: &Image) -> Result<f64, BackendError> {
        (**self).classify(chip)
    }
}

/// Never detects anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullBackend;

impl Detector for NullBackend {
    fn detect(&mut self, _frame: &Image, _ctx: &FrameContext) -> Result<Vec<Detection>, BackendError> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: bad frame index {value:?}")]
    FrameIndex { line: usize, value: String },
    #[error("line {line}: bad box {value:?}")]
    Box { line: usize, value: String },
    #[error("line {line}: bad score {value:?}")]
    Score { line: usize, value: String },
}

/// Parses `xmin,ymin,xmax,ymax` into a validated box.
pub fn parse_box_csv(s: &str) -> Option<BoundingBox> {
    let mut it = s.split(',').map(|p| p.trim().parse::<i64>());
    let (a, b, c, d) = (it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?);
    if it.next().is_some() {
        return None;
    }
    BoundingBox::from_signed(a, b, c, d).ok()
}

fn parse_score(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    (0.0..=1.0).contains(&v).then_some(v)
}

/// Replays scripted ground truth keyed by frame index.
///
/// Script boxes are in full-resolution coordinates; they are mapped onto the
/// detector input resolution on every call, the way a model running on the
/// downscaled frame would see them.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    script: BTreeMap<u64, Vec<Detection>>,
}

impl OracleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame_index: u64, detection: Detection) {
        self.script.entry(frame_index).or_default().push(detection);
    }

    /// Parses `frame_index<TAB>xmin,ymin,xmax,ymax<TAB>score` lines.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut oracle = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(ScriptError::FieldCount {
                    line,
                    found: fields.len(),
                });
            }
            let index = fields[0].trim().parse::<u64>().map_err(|_| ScriptError::FrameIndex {
                line,
                value: fields[0].to_string(),
            })?;
            let bbox = parse_box_csv(fields[1]).ok_or_else(|| ScriptError::Box {
                line,
                value: fields[1].to_string(),
            })?;
            let score = parse_score(fields[2]).ok_or_else(|| ScriptError::Score {
                line,
                value: fields[2].to_string(),
            })?;
            oracle.push(index, Detection::gun(bbox, score));
        }
        Ok(oracle)
    }

    pub fn frames(&self) -> impl Iterator<Item = u64> + '_ {
        self.script.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.script.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl Detector for OracleBackend {
    fn detect(&mut self, frame: &Image, ctx: &FrameContext) -> Result<Vec<Detection>, BackendError> {
        let Some(scripted) = self.script.get(&ctx.index) else {
            return Ok(Vec::new());
        };
        Ok(scripted
            .iter()
            .filter_map(|d| {
                let bbox = scale_box(&d.bbox, ctx.full_size, frame.size()).ok()?;
                Some(Detection { bbox, ..*d })
            })
            .collect())
    }
}

/// Returns the same score for every chip.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier(pub f64);

impl Classifier for ConstantClassifier {
    fn classify(&mut self, _chip: &Image) -> Result<f64, BackendError> {
        Ok(self.0)
    }
}

/// Returns scripted scores in call order, repeating the last one once the
/// script runs out.
#[derive(Debug, Clone)]
pub struct OracleClassifier {
    scores: Vec<f64>,
    next: usize,
}

impl OracleClassifier {
    pub fn new(scores: Vec<f64>) -> Self {
        assert!(!scores.is_empty(), "oracle classifier needs at least one score");
        Self { scores, next: 0 }
    }

    pub fn calls(&self) -> usize {
        self.next
    }
}

impl Classifier for OracleClassifier {
    fn classify(&mut self, _chip: &Image) -> Result<f64, BackendError> {
        let i = self.next.min(self.scores.len() - 1);
        self.next += 1;
        Ok(self.scores[i])
    }
}
