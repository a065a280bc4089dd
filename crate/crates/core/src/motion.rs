//! Frame-differencing motion gate.

use thiserror::Error;

use crate::config::PipelineConfig;
use crate::geometry::FrameSize;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("frame size changed from {expected} to {actual}")]
pub struct DimensionMismatch {
    pub expected: FrameSize,
    pub actual: FrameSize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionResult {
    pub changed_fraction: f64,
    pub active: bool,
}

impl MotionResult {
    fn from_fraction(changed_fraction: f64, cfg: &PipelineConfig) -> Self {
        Self {
            changed_fraction,
            active: changed_fraction >= cfg.motion_fraction_threshold,
        }
    }
}

/// Fraction of luma samples whose absolute difference exceeds `delta`.
pub(crate) fn changed_fraction(prev: &[u8], cur: &[u8], delta: u8) -> f64 {
    debug_assert_eq!(prev.len(), cur.len());
    if cur.is_empty() {
        return 0.0;
    }
    let changed = prev
        .iter()
        .zip(cur)
        .filter(|(&a, &b)| a.abs_diff(b) > delta)
        .count();
    changed as f64 / cur.len() as f64
}

pub(crate) fn gate_luma(prev: &[u8], cur: &[u8], cfg: &PipelineConfig) -> MotionResult {
    MotionResult::from_fraction(changed_fraction(prev, cur, cfg.motion_pixel_delta), cfg)
}

/// Compares two frames in grayscale.
pub fn motion_gate(prev: &Image, cur: &Image, cfg: &PipelineConfig) -> Result<MotionResult, DimensionMismatch> {
    if prev.size() != cur.size() {
        return Err(DimensionMismatch {
            expected: prev.size(),
            actual: cur.size(),
        });
    }
    Ok(gate_luma(&prev.luma(), &cur.luma(), cfg))
}
