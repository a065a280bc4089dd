//! Detection matching, confusion-derived metrics, and ROC analysis.
//!
//! Detection accuracy is defined as `tp / (tp + fp + fn)` since detection has
//! no true negatives. Any ratio whose denominator is zero is `None`
//! ("undefined") rather than 0 or 1.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{iou, BoundingBox};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no samples")]
    Empty,
    #[error("score at index {0} is not a number")]
    NotANumber(usize),
    #[error("ROC needs both positive and negative labels")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    /// Only meaningful for classification; always 0 for detection matching.
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn new(true_pos: u64, false_pos: u64, false_neg: u64, true_neg: u64) -> Self {
        Self {
            true_pos,
            false_pos,
            false_neg,
            true_neg,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

impl core::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            true_pos: self.true_pos + o.true_pos,
            false_pos: self.false_pos + o.false_pos,
            false_neg: self.false_neg + o.false_neg,
            true_neg: self.true_neg + o.true_neg,
        }
    }
}

impl core::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy, recall and precision as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub score: f64,
    pub bbox: BoundingBox,
}

/// Greedy one-to-one matching for a single image.
///
/// Predictions are visited in descending score (stable for ties). Each takes
/// the unmatched ground-truth box with the highest IoU, the earliest box on
/// ties, and is a true positive when that IoU reaches `iou_thr`.
pub fn match_image(predictions: &[ScoredBox], ground_truth: &[BoundingBox], iou_thr: f64) -> ConfusionCounts {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[b].score.total_cmp(&predictions[a].score));
    let mut taken = vec![false; ground_truth.len()];
    let mut counts = ConfusionCounts::default();
    for pi in order {
        let pred = &predictions[pi].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in ground_truth.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let v = iou(pred, gt);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, v)) if v >= iou_thr => {
                taken[gi] = true;
                counts.true_pos += 1;
            }
            _ => counts.false_pos += 1,
        }
    }
    counts.false_neg = taken.iter().filter(|t| !**t).count() as u64;
    counts
}

/// Sums [`match_image`] over `(predictions, ground_truth)` pairs.
pub fn match_detections<'a, I>(images: I, iou_thr: f64) -> ConfusionCounts
where
    I: IntoIterator<Item = (&'a [ScoredBox], &'a [BoundingBox])>,
{
    images
        .into_iter()
        .fold(ConfusionCounts::default(), |acc, (p, g)| acc + match_image(p, g, iou_thr))
}

pub fn detection_metrics(c: &ConfusionCounts) -> Metrics {
    Metrics {
        accuracy: ratio(c.true_pos, c.true_pos + c.false_pos + c.false_neg),
        recall: ratio(c.true_pos, c.true_pos + c.false_neg),
        precision: ratio(c.true_pos, c.true_pos + c.false_pos),
    }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NotANumber(i));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierEval {
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

/// Binary confusion at `thr`: an item is predicted gun when `score >= thr`.
pub fn classifier_metrics(scores: &[f64], labels: &[bool], thr: f64) -> Result<ClassifierEval, EvalError> {
    check_inputs(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &gun) in scores.iter().zip(labels) {
        match (s >= thr, gun) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(ClassifierEval {
        counts: c,
        metrics: Metrics {
            accuracy: ratio(c.true_pos + c.true_neg, c.total()),
            recall: ratio(c.true_pos, c.true_pos + c.false_neg),
            precision: ratio(c.true_pos, c.true_pos + c.false_pos),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Items with `score >= threshold` are predicted positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// From `(0, 0)` at `+inf` to `(1, 1)` at `-inf`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps every distinct score as a threshold. Tied scores move together,
/// giving a diagonal segment, and the area is integrated with trapezoids.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, EvalError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|l| **l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(scores.len() + 2);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}
