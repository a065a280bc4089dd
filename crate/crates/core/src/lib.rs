//! Allocation-only core of the gun detection system: box geometry, chip
//! resampling, the edge frame loop (motion gate, tracker, confirmation), and
//! the evaluation metrics. Everything here is deterministic and IO-free.

#![no_std]

extern crate alloc;

pub mod backend;
pub mod config;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod motion;
pub mod pipeline;
pub mod queue;
pub mod tracker;

pub use backend::{
    BackendError, Classifier, ConstantClassifier, Detection, Detector, FrameContext, NullBackend, ObjectClass,
    OracleBackend, OracleClassifier,
};
pub use config::{ConfigError, PipelineConfig};
pub use geometry::{iou, scale_box, BoundingBox, FrameSize, GeometryError};
pub use image::{crop_and_resize, Image, ImageError, PixelFormat};
pub use motion::{motion_gate, MotionResult};
pub use pipeline::{run_pipeline, EventSink, Frame, GunEvent, Pipeline, PipelineError, RunSummary, SinkError};
pub use tracker::{confirm_step, Track, Tracker};
