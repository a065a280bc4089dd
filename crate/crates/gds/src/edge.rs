//! Frame sources for the edge loop, a synthetic scene generator, and the
//! runner that wires a source, backends and an uplink together.
//!
//! Edge settings come from flags, then `GDS_*` environment variables, then
//! a TOML file:
//!
//! | key          | env                   | default        |
//! |--------------|-----------------------|----------------|
//! | `device_id`  | `GDS_DEVICE_ID`       | required       |
//! | `sink`       | `GDS_SINK`            | none           |
//! | `out_dir`    | `GDS_OUT_DIR`         | none           |
//! | `token`      | `GDS_TOKEN`           | none           |
//! | `detector`   | `GDS_DETECTOR`        | `null`         |
//! | `classifier` | `GDS_EDGE_CLASSIFIER` | `constant:1.0` |
//! | `fps`        | `GDS_FPS`             | `25`           |
//!
//! A `[pipeline]` table overrides individual [`PipelineConfig`] fields.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gds_core::pipeline::StageClock;
use gds_core::{
    BoundingBox, Classifier, Detection, Detector, Frame, FrameSize, Image, OracleBackend, Pipeline, PipelineConfig,
    PipelineError, PixelFormat, RunSummary,
};
use serde::Deserialize;

use crate::imaging::{self, ImagingError};
use crate::proto::uplink::{DirectorySink, HttpTransport, RetryPolicy, UplinkSink, UplinkStats};

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("decoding {path}: {source}")]
    Decode { path: PathBuf, source: ImagingError },
    #[error("{path}: trailing {bytes} byte(s) do not form a whole frame")]
    PartialFrame { path: PathBuf, bytes: usize },
    #[error("no frames in {0}")]
    Empty(PathBuf),
}

/// Monotonic clock for per-stage timing.
pub struct InstantClock(Instant);

impl Default for InstantClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl StageClock for InstantClock {
    fn now_ns(&mut self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

/// Timestamps for frame `i` at a fixed rate.
#[derive(Debug, Clone, Copy)]
pub struct Timing {
    pub start_ms: i64,
    pub interval_ms: i64,
}

impl Timing {
    pub fn at(&self, i: u64) -> i64 {
        self.start_ms + self.interval_ms * i as i64
    }
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            start_ms: 0,
            interval_ms: 40,
        }
    }
}

fn is_frame_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Image files of a directory in file-name order, one frame each. Use
/// zero-padded names so that name order is frame order.
pub struct ImageDirSource {
    files: std::vec::IntoIter<PathBuf>,
    next: u64,
    timing: Timing,
}

impl ImageDirSource {
    pub fn open(dir: &Path, timing: Timing) -> Result<Self, SourceError> {
        let io = |source| SourceError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut files = Vec::new();
        for e in std::fs::read_dir(dir).map_err(io)? {
            let p = e.map_err(io)?.path();
            if p.is_file() && is_frame_file(&p) {
                files.push(p);
            }
        }
        if files.is_empty() {
            return Err(SourceError::Empty(dir.to_path_buf()));
        }
        files.sort();
        Ok(Self {
            files: files.into_iter(),
            next: 0,
            timing,
        })
    }
}

impl Iterator for ImageDirSource {
    type Item = Result<Frame, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let path = self.files.next()?;
        let index = self.next;
        self.next += 1;
        Some(
            imaging::load(&path)
                .map(|image| Frame {
                    index,
                    timestamp_ms: self.timing.at(index),
                    image,
                })
                .map_err(|source| SourceError::Decode { path, source }),
        )
    }
}

/// Headerless packed RGB24 frames of a known size, back to back.
pub struct RawVideoSource {
    path: PathBuf,
    reader: BufReader<File>,
    size: FrameSize,
    next: u64,
    timing: Timing,
    done: bool,
}

impl RawVideoSource {
    pub fn open(path: &Path, size: FrameSize, timing: Timing) -> Result<Self, SourceError> {
        let f = File::open(path).map_err(|source| SourceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            reader: BufReader::new(f),
            size,
            next: 0,
            timing,
            done: false,
        })
    }
}

impl Iterator for RawVideoSource {
    type Item = Result<Frame, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let len = self.size.area() as usize * 3;
        let mut buf = vec![0u8; len];
        let mut filled = 0;
        while filled < len {
            match self.reader.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(source) => {
                    self.done = true;
                    return Some(Err(SourceError::Io {
                        path: self.path.clone(),
                        source,
                    }));
                }
            }
        }
        if filled < len {
            self.done = true;
            return (filled > 0).then(|| {
                Err(SourceError::PartialFrame {
                    path: self.path.clone(),
                    bytes: filled,
                })
            });
        }
        let index = self.next;
        self.next += 1;
        let image = Image::from_raw(self.size.width(), self.size.height(), PixelFormat::Rgb8, buf)
            .expect("buffer sized for the frame");
        Some(Ok(Frame {
            index,
            timestamp_ms: self.timing.at(index),
            image,
        }))
    }
}

/// A flat background with one bright square that moves by `velocity` each
/// frame, bouncing off the edges. `hold` frames at the start repeat the
/// first frame, giving a static prefix.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub size: FrameSize,
    pub frames: u64,
    pub object: u32,
    pub start: (u32, u32),
    pub velocity: (i32, i32),
    pub background: u8,
    pub foreground: [u8; 3],
    pub hold: u64,
    pub timing: Timing,
}

impl SyntheticScene {
    /// A 640x360 scene with a 64 px object moving 8 px per frame.
    pub fn new(size: FrameSize, frames: u64) -> Self {
        Self {
            size,
            frames,
            object: 64.min(size.width() / 2).min(size.height() / 2).max(1),
            start: (0, 0),
            velocity: (8, 4),
            background: 40,
            foreground: [230, 230, 230],
            hold: 0,
            timing: Timing::default(),
        }
    }

    fn axis(start: u32, v: i32, t: u64, span: u32) -> u32 {
        // reflect a linear walk into [0, span]
        if span == 0 {
            return 0;
        }
        let period = 2 * i64::from(span);
        let p = (i64::from(start) + i64::from(v) * t as i64).rem_euclid(period);
        (if p > i64::from(span) { period - p } else { p }) as u32
    }

    pub fn object_box(&self, i: u64) -> BoundingBox {
        let t = i.saturating_sub(self.hold);
        let x = Self::axis(self.start.0, self.velocity.0, t, self.size.width() - self.object);
        let y = Self::axis(self.start.1, self.velocity.1, t, self.size.height() - self.object);
        BoundingBox::new(x, y, x + self.object, y + self.object).expect("object fits")
    }

    pub fn image(&self, i: u64) -> Image {
        let mut img = Image::filled(self.size, PixelFormat::Rgb8, self.background);
        img.fill_region(&self.object_box(i), self.foreground).expect("object fits");
        img
    }

    pub fn frame(&self, i: u64) -> Frame {
        Frame {
            index: i,
            timestamp_ms: self.timing.at(i),
            image: self.image(i),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.frames).map(|i| self.frame(i))
    }

    /// Detector script reporting the object on every frame with `score`.
    pub fn oracle(&self, score: f64) -> OracleBackend {
        let mut o = OracleBackend::new();
        for i in 0..self.frames {
            o.push(i, Detection::gun(self.object_box(i), score));
        }
        o
    }

    /// Same script in the text format read by `OracleBackend::parse`.
    pub fn oracle_script(&self, score: f64) -> String {
        let mut s = String::from("# frame\tbox\tscore\n");
        for i in 0..self.frames {
            s.push_str(&format!("{i}\t{}\t{score}\n", self.object_box(i)));
        }
        s
    }

    /// Writes `frame_000000.png` ... into `dir`.
    pub fn write_frames(&self, dir: &Path) -> Result<(), ImagingError> {
        std::fs::create_dir_all(dir)?;
        for i in 0..self.frames {
            let img = self.image(i);
            image::save_buffer(
                dir.join(format!("frame_{i:06}.png")),
                img.as_bytes(),
                img.width(),
                img.height(),
                image::ExtendedColorType::Rgb8,
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOverrides {
    pub iou_match_threshold: Option<f64>,
    pub classifier_threshold: Option<f64>,
    pub confirm_count: Option<u32>,
    pub chip_size: Option<u32>,
    pub detect_scale: Option<u32>,
    pub motion_fraction_threshold: Option<f64>,
    pub motion_pixel_delta: Option<u8>,
    pub track_max_age: Option<u32>,
    pub detect_stride: Option<u32>,
    pub reset_on_negative: Option<bool>,
    pub queue_capacity: Option<usize>,
}

impl PipelineOverrides {
    pub fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            iou_match_threshold,
            classifier_threshold,
            confirm_count,
            chip_size,
            detect_scale,
            motion_fraction_threshold,
            motion_pixel_delta,
            track_max_age,
            detect_stride,
            reset_on_negative,
            queue_capacity
        );
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeFileConfig {
    pub device_id: Option<String>,
    pub sink: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub token: Option<String>,
    pub detector: Option<String>,
    pub classifier: Option<String>,
    pub fps: Option<u32>,
    #[serde(default)]
    pub pipeline: PipelineOverrides,
}

#[derive(Debug, thiserror::Error)]
pub enum EdgeError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("uplink: {0}")]
    Uplink(String),
    #[error("reading {path}: {message}")]
    Config { path: PathBuf, message: String },
}

pub fn load_edge_config(path: &Path) -> Result<EdgeFileConfig, EdgeError> {
    let err = |message: String| EdgeError::Config {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    toml::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Where confirmed events go.
pub enum SinkTarget {
    /// POST to an ingest URL with retries.
    Http {
        url: String,
        token: Option<String>,
        timeout: Duration,
        policy: RetryPolicy,
    },
    /// One JSON envelope per file.
    Directory(PathBuf),
}

#[derive(Debug, Clone, Default)]
pub struct EdgeOutcome {
    pub summary: RunSummary,
    pub uplink: Option<UplinkStats>,
    pub files_written: usize,
}

/// Runs the frame loop to the end of `frames`, flushes the pipeline, and
/// drains the uplink before returning.
pub fn run_edge<D, C, I>(
    frames: I,
    detector: D,
    classifier: C,
    cfg: PipelineConfig,
    device_id: &str,
    target: SinkTarget,
) -> Result<EdgeOutcome, EdgeError>
where
    D: Detector,
    C: Classifier,
    I: IntoIterator<Item = Result<Frame, SourceError>>,
{
    let capacity = cfg.queue_capacity;
    let mut pipeline = Pipeline::new(cfg, device_id, detector, classifier)?;
    match target {
        SinkTarget::Http {
            url,
            token,
            timeout,
            policy,
        } => {
            let transport = HttpTransport::new(url, token, timeout).map_err(|e| EdgeError::Uplink(e.to_string()))?;
            let mut sink = UplinkSink::spawn(transport, policy, capacity, Box::new(std::thread::sleep));
            let result = (|| {
                for f in frames {
                    pipeline.process_frame(&f?, &mut sink)?;
                }
                Ok::<_, EdgeError>(())
            })();
            let summary = pipeline.finish(&mut sink);
            let stats = sink.shutdown();
            result?;
            Ok(EdgeOutcome {
                summary,
                uplink: Some(stats),
                files_written: 0,
            })
        }
        SinkTarget::Directory(dir) => {
            let mut sink = DirectorySink::new(&dir).map_err(|e| EdgeError::Uplink(format!("{}: {e}", dir.display())))?;
            for f in frames {
                pipeline.process_frame(&f?, &mut sink)?;
            }
            let summary = pipeline.finish(&mut sink);
            Ok(EdgeOutcome {
                summary,
                uplink: None,
                files_written: sink.written.len(),
            })
        }
    }
}
