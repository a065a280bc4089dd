//! The edge frame loop: motion gate, downscaled detection, tracking,
//! repeated classification, and event packaging.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::backend::{BackendError, Classifier, Detection, Detector, FrameContext};
use crate::config::{ConfigError, PipelineConfig};
use crate::geometry::{scale_box, BoundingBox, FrameSize, GeometryError};
use crate::image::{crop_and_resize, resize, Image, ImageError};
use crate::motion::{gate_luma, MotionResult};
use crate::queue::BoundedQueue;
use crate::tracker::{confirm_step, Tracker};

/// One decoded frame with its source-supplied timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub timestamp_ms: i64,
    pub image: Image,
}

/// A confirmed detection ready to leave the device.
#[derive(Debug, Clone, PartialEq)]
pub struct GunEvent {
    pub device_id: String,
    pub timestamp_ms: i64,
    pub frame_index: u64,
    pub track_id: u64,
    /// Full-resolution coordinates.
    pub bbox: BoundingBox,
    pub detector_score: f64,
    pub chip: Image,
    pub snapshot: Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sink delivery failed: {0}")]
pub struct SinkError(pub String);

/// Consumer of confirmed events. A failed delivery leaves the event queued
/// inside the pipeline for another attempt on a later frame.
pub trait EventSink {
    fn deliver(&mut self, event: &GunEvent) -> Result<(), SinkError>;
}

impl EventSink for Vec<GunEvent> {
    fn deliver(&mut self, event: &GunEvent) -> Result<(), SinkError> {
        self.push(event.clone());
        Ok(())
    }
}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn deliver(&mut self, event: &GunEvent) -> Result<(), SinkError> {
        (**self).deliver(event)
    }
}

/// Monotonic nanosecond source used for per-stage timing.
pub trait StageClock {
    fn now_ns(&mut self) -> u64;
}

/// Clock that always reads zero; timing is skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl StageClock for NoClock {
    fn now_ns(&mut self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageTimes {
    pub motion_ns: u64,
    pub detect_ns: u64,
    pub track_ns: u64,
    pub classify_ns: u64,
}

impl StageTimes {
    pub fn total_ns(&self) -> u64 {
        self.motion_ns + self.detect_ns + self.track_ns + self.classify_ns
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub frames_processed: u64,
    pub motion_active_frames: u64,
    pub detector_invocations: u64,
    pub detections: u64,
    pub max_detections_per_frame: u64,
    pub tracks_created: u64,
    pub classifications: u64,
    pub events_fired: u64,
    pub events_delivered: u64,
    pub delivery_failures: u64,
    pub events_dropped: u64,
    pub events_pending: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("frame {index}: size {actual} differs from first frame {expected}")]
    FrameSize {
        index: u64,
        expected: FrameSize,
        actual: FrameSize,
    },
    #[error("frame {index}: timestamp {timestamp_ms} precedes previous {previous_ms}")]
    Timestamp {
        index: u64,
        timestamp_ms: i64,
        previous_ms: i64,
    },
    #[error("frame {index}: detector: {source}")]
    Detector { index: u64, source: BackendError },
    #[error("frame {index}: classifier: {source}")]
    Classifier { index: u64, source: BackendError },
    #[error("frame {index}: {source}")]
    Image { index: u64, source: ImageError },
}

/// What happened on one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameOutcome {
    /// `None` for the first frame, which has nothing to compare against.
    pub motion: Option<MotionResult>,
    pub detector_ran: bool,
    /// Detections mapped back to full resolution.
    pub detections: Vec<Detection>,
    /// Tracks that fired on this frame.
    pub fired: Vec<u64>,
}

/// Stateful single-context frame loop.
pub struct Pipeline<D, C> {
    cfg: PipelineConfig,
    device_id: String,
    detector: D,
    classifier: C,
    tracker: Tracker,
    prev_luma: Option<Vec<u8>>,
    frame_size: Option<FrameSize>,
    last_timestamp: Option<i64>,
    active_frames: u64,
    pending: BoundedQueue<GunEvent>,
    summary: RunSummary,
    times: StageTimes,
}

impl<D: Detector, C: Classifier> Pipeline<D, C> {
    pub fn new(cfg: PipelineConfig, device_id: impl Into<String>, detector: D, classifier: C) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let cap = cfg.queue_capacity;
        Ok(Self {
            cfg,
            device_id: device_id.into(),
            detector,
            classifier,
            tracker: Tracker::new(),
            prev_luma: None,
            frame_size: None,
            last_timestamp: None,
            active_frames: 0,
            pending: BoundedQueue::new(cap),
            summary: RunSummary::default(),
            times: StageTimes::default(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn detector(&self) -> &D {
        &self.detector
    }

    pub fn classifier(&self) -> &C {
        &self.classifier
    }

    pub fn stage_times(&self) -> StageTimes {
        self.times
    }

    pub fn summary(&self) -> RunSummary {
        let mut s = self.summary;
        s.tracks_created = self.tracker.tracks_created();
        s.events_dropped = self.pending.dropped();
        s.events_pending = self.pending.len() as u64;
        s
    }

    /// Detection-resolution size for a given full frame size.
    pub fn detect_size(&self, full: FrameSize) -> FrameSize {
        let s = self.cfg.detect_scale;
        FrameSize::new((full.width() / s).max(1), (full.height() / s).max(1)).expect("nonzero")
    }

    pub fn process_frame<S: EventSink>(&mut self, frame: &Frame, sink: &mut S) -> Result<FrameOutcome, PipelineError> {
        self.process_frame_timed(frame, sink, &mut NoClock)
    }

    pub fn process_frame_timed<S: EventSink, K: StageClock>(
        &mut self,
        frame: &Frame,
        sink: &mut S,
        clock: &mut K,
    ) -> Result<FrameOutcome, PipelineError> {
        let index = frame.index;
        let full = frame.image.size();
        match self.frame_size {
            Some(expected) if expected != full => {
                return Err(PipelineError::FrameSize {
                    index,
                    expected,
                    actual: full,
                })
            }
            _ => self.frame_size = Some(full),
        }
        if let Some(previous_ms) = self.last_timestamp {
            if frame.timestamp_ms < previous_ms {
                return Err(PipelineError::Timestamp {
                    index,
                    timestamp_ms: frame.timestamp_ms,
                    previous_ms,
                });
            }
        }
        self.last_timestamp = Some(frame.timestamp_ms);
        self.summary.frames_processed += 1;

        let t0 = clock.now_ns();
        let luma = frame.image.luma();
        let motion = self.prev_luma.as_deref().map(|prev| gate_luma(prev, &luma, &self.cfg));
        self.prev_luma = Some(luma);
        let t1 = clock.now_ns();
        self.times.motion_ns += t1.saturating_sub(t0);

        let mut outcome = FrameOutcome {
            motion,
            ..Default::default()
        };
        let active = motion.is_some_and(|m| m.active);
        if active {
            self.summary.motion_active_frames += 1;
            let slot = self.active_frames;
            self.active_frames += 1;
            if slot % self.cfg.detect_stride as u64 == 0 {
                self.detect_track_classify(frame, &mut outcome, clock)?;
            }
        }
        self.flush(sink);
        Ok(outcome)
    }

    fn detect_track_classify<K: StageClock>(
        &mut self,
        frame: &Frame,
        outcome: &mut FrameOutcome,
        clock: &mut K,
    ) -> Result<(), PipelineError> {
        let index = frame.index;
        let full = frame.image.size();
        let t0 = clock.now_ns();
        let small_size = self.detect_size(full);
        let small;
        let input = if small_size == full {
            &frame.image
        } else {
            small = resize(&frame.image, small_size);
            &small
        };
        let ctx = FrameContext {
            index,
            timestamp_ms: frame.timestamp_ms,
            full_size: full,
        };
        let raw = self
            .detector
            .detect(input, &ctx)
            .map_err(|source| PipelineError::Detector { index, source })?;
        self.summary.detector_invocations += 1;
        outcome.detector_ran = true;
        for d in &raw {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(PipelineError::Detector {
                    index,
                    source: BackendError::ScoreRange(d.score),
                });
            }
            if !d.bbox.fits_within(small_size) {
                return Err(PipelineError::Detector {
                    index,
                    source: BackendError::BoxOutsideFrame {
                        bbox: d.bbox,
                        frame: small_size,
                    },
                });
            }
            match scale_box(&d.bbox, small_size, full) {
                Ok(bbox) => outcome.detections.push(Detection { bbox, ..*d }),
                // collapsed to zero area at full resolution; nothing to track
                Err(GeometryError::Degenerate { .. }) => {}
                Err(e) => return Err(PipelineError::Image { index, source: e.into() }),
            }
        }
        self.summary.detections += outcome.detections.len() as u64;
        self.summary.max_detections_per_frame = self.summary.max_detections_per_frame.max(raw.len() as u64);
        let t1 = clock.now_ns();
        self.times.detect_ns += t1.saturating_sub(t0);

        let assoc = self.tracker.associate(&outcome.detections, &self.cfg);
        let t2 = clock.now_ns();
        self.times.track_ns += t2.saturating_sub(t1);

        for track_id in assoc.updated {
            let Some(track) = self.tracker.get_mut(track_id) else {
                continue;
            };
            if track.reported {
                continue;
            }
            let chip = crop_and_resize(&frame.image, &track.bbox, self.cfg.chip_size)
                .map_err(|source| PipelineError::Image { index, source })?;
            let score = self
                .classifier
                .classify(&chip)
                .map_err(|source| PipelineError::Classifier { index, source })?;
            if !(0.0..=1.0).contains(&score) {
                return Err(PipelineError::Classifier {
                    index,
                    source: BackendError::ScoreRange(score),
                });
            }
            self.summary.classifications += 1;
            if confirm_step(track, score, &self.cfg) {
                let event = GunEvent {
                    device_id: self.device_id.clone(),
                    timestamp_ms: frame.timestamp_ms,
                    frame_index: index,
                    track_id,
                    bbox: track.bbox,
                    detector_score: track.last_score,
                    chip,
                    snapshot: frame.image.clone(),
                };
                self.summary.events_fired += 1;
                outcome.fired.push(track_id);
                self.pending.push(event);
            }
        }
        self.times.classify_ns += clock.now_ns().saturating_sub(t2);
        Ok(())
    }

    /// Delivers queued events in order until the sink refuses one.
    pub fn flush<S: EventSink>(&mut self, sink: &mut S) {
        while let Some(event) = self.pending.front() {
            match sink.deliver(event) {
                Ok(()) => {
                    self.pending.pop();
                    self.summary.events_delivered += 1;
                }
                Err(_) => {
                    self.summary.delivery_failures += 1;
                    break;
                }
            }
        }
    }

    /// Final flush; returns the run summary.
    pub fn finish<S: EventSink>(&mut self, sink: &mut S) -> RunSummary {
        self.flush(sink);
        self.summary()
    }
}

/// Runs every frame through a fresh pipeline and flushes at the end.
pub fn run_pipeline<D, C, S, I>(
    frames: I,
    detector: D,
    classifier: C,
    cfg: PipelineConfig,
    device_id: &str,
    sink: &mut S,
) -> Result<RunSummary, PipelineError>
where
    D: Detector,
    C: Classifier,
    S: EventSink,
    I: IntoIterator<Item = Frame>,
{
    let mut pipeline = Pipeline::new(cfg, device_id, detector, classifier)?;
    for frame in frames {
        pipeline.process_frame(&frame, sink)?;
    }
    Ok(pipeline.finish(sink))
}
