//! File formats and reports around `gds_core::eval`.
//!
//! Detection predictions are `image<TAB>score<TAB>xmin,ymin,xmax,ymax`, one
//! box per line. Classifier scores are `image<TAB>score[<TAB>label]` where a
//! missing label is looked up in the dataset index. Blank lines and lines
//! starting with `#` are ignored in both.
//!
//! Detection accuracy is `tp / (tp + fp + fn)`: detection has no true
//! negatives, so the usual `(tp + tn) / total` does not apply.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gds_core::backend::parse_box_csv;
use gds_core::eval::{self, ConfusionCounts, EvalError, Metrics, RocCurve, ScoredBox};
use gds_core::pipeline::StageTimes;
use gds_core::{BoundingBox, Classifier, Detector, EventSink, Frame, GunEvent, Pipeline, PipelineConfig, SinkError};

use crate::backends::parse_score;
use crate::dataset::{Category, DatasetIndex, Stage};
use crate::edge::InstantClock;

#[derive(Debug, thiserror::Error)]
pub enum EvalIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: image {image:?} is not in the dataset")]
    UnknownImage { line: usize, image: String },
    #[error("line {line}: image name {image:?} matches several dataset files")]
    AmbiguousImage { line: usize, image: String },
    #[error("line {line}: no label given and {image:?} is not a classifier image")]
    NoLabel { line: usize, image: String },
    #[error("threshold {0} must be in (0, 1]")]
    Threshold(f64),
    #[error(transparent)]
    Metrics(#[from] EvalError),
}

fn parse_err(line: usize, message: impl Into<String>) -> EvalIoError {
    EvalIoError::Parse {
        line,
        message: message.into(),
    }
}

/// Non-comment lines split on tabs, with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let l = raw.trim_end_matches('\r');
        (!l.trim().is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split('\t').collect()))
    })
}

fn score_field(line: usize, s: &str) -> Result<f64, EvalIoError> {
    parse_score(s).ok_or_else(|| parse_err(line, format!("score {s:?} is not in [0, 1]")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub line: usize,
    pub image: String,
    pub score: f64,
    pub bbox: BoundingBox,
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, EvalIoError> {
    records(text)
        .map(|(line, f)| {
            if f.len() != 3 {
                return Err(parse_err(line, format!("expected 3 tab-separated fields, found {}", f.len())));
            }
            let bbox = parse_box_csv(f[2]).ok_or_else(|| parse_err(line, format!("bad box {:?}", f[2])))?;
            Ok(Prediction {
                line,
                image: f[0].to_string(),
                score: score_field(line, f[1])?,
                bbox,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLine {
    pub line: usize,
    pub image: String,
    pub score: f64,
    pub label: Option<bool>,
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gun" | "1" | "true" | "positive" => Some(true),
        "other" | "0" | "false" | "negative" => Some(false),
        _ => None,
    }
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreLine>, EvalIoError> {
    records(text)
        .map(|(line, f)| {
            if !(2..=3).contains(&f.len()) {
                return Err(parse_err(line, format!("expected 2 or 3 tab-separated fields, found {}", f.len())));
            }
            let label = match f.get(2) {
                Some(l) => Some(parse_label(l).ok_or_else(|| parse_err(line, format!("bad label {l:?}")))?),
                None => None,
            };
            Ok(ScoreLine {
                line,
                image: f[0].to_string(),
                score: score_field(line, f[1])?,
                label,
            })
        })
        .collect()
}

fn rel_key(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Finds dataset entries by relative path or, failing that, by unique file name.
struct Resolver {
    by_path: HashMap<String, usize>,
    by_name: HashMap<String, Vec<usize>>,
}

impl Resolver {
    fn new(index: &DatasetIndex, stage: Stage) -> Self {
        let mut by_path = HashMap::new();
        let mut by_name: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in index.entries.iter().enumerate().filter(|(_, e)| e.stage == stage) {
            by_path.insert(rel_key(&e.path), i);
            if let Some(n) = e.path.file_name() {
                by_name.entry(n.to_string_lossy().into_owned()).or_default().push(i);
            }
        }
        Self { by_path, by_name }
    }

    fn find(&self, line: usize, image: &str) -> Result<Option<usize>, EvalIoError> {
        let key = image.trim().replace('\\', "/");
        let key = key.trim_start_matches("./");
        if let Some(&i) = self.by_path.get(key) {
            return Ok(Some(i));
        }
        match self.by_name.get(key).map(Vec::as_slice) {
            Some([i]) => Ok(Some(*i)),
            Some(_) => Err(EvalIoError::AmbiguousImage {
                line,
                image: image.into(),
            }),
            None => Ok(None),
        }
    }
}

/// Relative paths from a manifest such as the `test.txt` written by a split.
pub fn parse_manifest(text: &str) -> BTreeSet<PathBuf> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(PathBuf::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEval {
    /// Images scored: annotated detector gun images plus detector other images.
    pub images: usize,
    pub ground_truth: u64,
    pub predictions: u64,
    /// Predictions on images outside the evaluated set (not in the subset,
    /// or gun images whose annotation could not be read).
    pub ignored_predictions: u64,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

pub fn evaluate_detections(
    index: &DatasetIndex,
    predictions: &[Prediction],
    iou_thr: f64,
    subset: Option<&BTreeSet<PathBuf>>,
) -> Result<DetectionEval, EvalIoError> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(EvalIoError::Threshold(iou_thr));
    }
    let mut gt: BTreeMap<usize, Vec<BoundingBox>> = BTreeMap::new();
    for (i, e) in index.entries.iter().enumerate() {
        if e.stage != Stage::Detector || subset.is_some_and(|s| !s.contains(&e.path)) {
            continue;
        }
        match (e.category, &e.annotation) {
            (Category::Gun, Some(a)) => {
                let boxes = a.gun_objects().filter_map(|o| o.bounding_box().ok()).collect();
                gt.insert(i, boxes);
            }
            (Category::Gun, None) => {}
            (Category::Other, _) => {
                gt.insert(i, Vec::new());
            }
        }
    }
    let resolver = Resolver::new(index, Stage::Detector);
    let mut per_image: BTreeMap<usize, Vec<ScoredBox>> = BTreeMap::new();
    let mut ignored = 0;
    for p in predictions {
        let i = resolver.find(p.line, &p.image)?.ok_or_else(|| EvalIoError::UnknownImage {
            line: p.line,
            image: p.image.clone(),
        })?;
        if gt.contains_key(&i) {
            per_image.entry(i).or_default().push(ScoredBox {
                score: p.score,
                bbox: p.bbox,
            });
        } else {
            ignored += 1;
        }
    }
    let empty = Vec::new();
    let counts = eval::match_detections(
        gt.iter()
            .map(|(i, g)| (per_image.get(i).unwrap_or(&empty).as_slice(), g.as_slice())),
        iou_thr,
    );
    Ok(DetectionEval {
        images: gt.len(),
        ground_truth: gt.values().map(|g| g.len() as u64).sum(),
        predictions: predictions.len() as u64 - ignored,
        ignored_predictions: ignored,
        counts,
        metrics: eval::detection_metrics(&counts),
    })
}

/// Scores and labels in file order. A missing label comes from the
/// category folder of the matching classifier image.
pub fn label_scores(lines: &[ScoreLine], index: Option<&DatasetIndex>) -> Result<(Vec<f64>, Vec<bool>), EvalIoError> {
    let resolver = index.map(|ix| Resolver::new(ix, Stage::Classifier));
    let mut scores = Vec::with_capacity(lines.len());
    let mut labels = Vec::with_capacity(lines.len());
    for l in lines {
        let label = match (l.label, index.zip(resolver.as_ref())) {
            (Some(v), _) => v,
            (None, Some((ix, r))) => match r.find(l.line, &l.image)? {
                Some(i) => ix.entries[i].category == Category::Gun,
                None => {
                    return Err(EvalIoError::NoLabel {
                        line: l.line,
                        image: l.image.clone(),
                    })
                }
            },
            (None, None) => {
                return Err(EvalIoError::NoLabel {
                    line: l.line,
                    image: l.image.clone(),
                })
            }
        };
        scores.push(l.score);
        labels.push(label);
    }
    Ok((scores, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Accuracy is `tp / (tp + fp + fn)`.
    Detection,
    /// Accuracy is `(tp + tn) / total`.
    Classifier,
}

impl TableKind {
    fn headers(self) -> [&'static str; 4] {
        match self {
            TableKind::Detection => ["Backbone", "Acc %", "Rec %", "Pre %"],
            TableKind::Classifier => ["Model", "Acc(%)", "Rec(%)", "Pre(%)"],
        }
    }

    fn name_key(self) -> &'static str {
        match self {
            TableKind::Detection => "backbone",
            TableKind::Classifier => "model",
        }
    }

    fn caption(self, thr: f64) -> String {
        match self {
            TableKind::Detection => format!("Detection at IoU threshold = {thr}"),
            TableKind::Classifier => format!("Classifier at threshold = {thr}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    pub name: String,
    pub counts: ConfusionCounts,
}

/// `num / den` as a percentage with two decimals, rounded half up in exact
/// integer arithmetic.
pub fn percent(num: u64, den: u64) -> Option<String> {
    if den == 0 {
        return None;
    }
    let (num, den) = (u128::from(num), u128::from(den));
    let hundredths = (num * 20_000 + den) / (2 * den);
    Some(format!("{}.{:02}", hundredths / 100, hundredths % 100))
}

/// Accuracy, recall and precision cells for one row.
pub fn row_percentages(kind: TableKind, c: &ConfusionCounts) -> [Option<String>; 3] {
    let acc = match kind {
        TableKind::Detection => percent(c.true_pos, c.true_pos + c.false_pos + c.false_neg),
        TableKind::Classifier => percent(c.true_pos + c.true_neg, c.total()),
    };
    [
        acc,
        percent(c.true_pos, c.true_pos + c.false_neg),
        percent(c.true_pos, c.true_pos + c.false_pos),
    ]
}

const UNDEFINED: &str = "undefined";

/// Aligned text table with a one-line caption.
pub fn render_table(kind: TableKind, threshold: f64, rows: &[TableRow]) -> String {
    let headers = kind.headers();
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            let [a, b, c] = row_percentages(kind, &r.counts).map(|v| v.unwrap_or_else(|| UNDEFINED.into()));
            [r.name.clone(), a, b, c]
        })
        .collect();
    let mut width = headers.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = kind.caption(threshold);
    out.push('\n');
    let line = |cols: [&str; 4]| {
        let mut s = format!("{:<w$}", cols[0], w = width[0]);
        for (c, w) in cols[1..].iter().zip(&width[1..]) {
            let _ = write!(s, " | {c:>w$}");
        }
        s.push('\n');
        s
    };
    out.push_str(&line(headers));
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for row in &cells {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
    }
    out
}

/// One `key=value` line per row; pairs are separated by single spaces.
pub fn render_kv(kind: TableKind, threshold: f64, rows: &[TableRow]) -> String {
    let thr_key = match kind {
        TableKind::Detection => "iou",
        TableKind::Classifier => "threshold",
    };
    let mut out = String::new();
    for r in rows {
        let [a, b, c] = row_percentages(kind, &r.counts).map(|v| v.unwrap_or_else(|| UNDEFINED.into()));
        let k = r.counts;
        let _ = write!(
            out,
            "{}={} {thr_key}={threshold} acc_pct={a} rec_pct={b} pre_pct={c} tp={} fp={} fn={}",
            kind.name_key(),
            r.name,
            k.true_pos,
            k.false_pos,
            k.false_neg
        );
        if kind == TableKind::Classifier {
            let _ = write!(out, " tn={}", k.true_neg);
        }
        out.push('\n');
    }
    out
}

/// Splits a `key=value key=value` line produced by this module.
pub fn parse_kv_line(line: &str) -> BTreeMap<String, String> {
    line.split_whitespace()
        .filter_map(|p| p.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

pub fn parse_roc_csv(text: &str) -> Option<Vec<(f64, f64, f64)>> {
    let mut lines = text.lines();
    if lines.next()? != "threshold,fpr,tpr" {
        return None;
    }
    lines
        .map(|l| {
            let mut it = l.split(',').map(str::parse::<f64>);
            let v = (it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?);
            it.next().is_none().then_some(v)
        })
        .collect()
}

/// Square SVG plot of the curve with the chance diagonal and the area in the label.
pub fn roc_svg(curve: &RocCurve, title: &str) -> String {
    const SIZE: f64 = 360.0;
    const PAD: f64 = 48.0;
    let x = |v: f64| PAD + v * SIZE;
    let y = |v: f64| PAD + (1.0 - v) * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{total}" height="{total}" fill="white"/>"#);
    for i in 0..=10 {
        let t = f64::from(i) / 10.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
            x(t),
            y(0.0),
            x(t),
            y(1.0)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
            x(0.0),
            y(t),
            x(1.0),
            y(t)
        );
        if i % 2 == 0 {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.1}</text>"#, x(t), y(0.0) + 16.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.1}</text>"#, x(0.0) - 6.0, y(t) + 4.0);
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    let pts: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr))).collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
        pts.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">False positive rate</text>"#,
        x(0.5),
        total - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">True positive rate</text>"#,
        y(0.5),
        y(0.5)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="14">{} (AUC = {:.4})</text>"#,
        x(0.5),
        xml_escape(title),
        curve.auc
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const WARMUP_FRAMES: u64 = 10;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("no frames after the {WARMUP_FRAMES}-frame warm-up")]
    NoFrames,
    #[error(transparent)]
    Pipeline(#[from] gds_core::PipelineError),
    #[error("frame source: {0}")]
    Source(Box<dyn std::error::Error + Send + Sync>),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BenchLimit {
    pub frames: Option<u64>,
    pub duration: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Frames in the measured window.
    pub frames: u64,
    pub warmup: u64,
    pub wall: Duration,
    pub fps: f64,
    pub detector_invocations: u64,
    pub motion_active_frames: u64,
    pub events_fired: u64,
    pub stages: StageTimes,
}

impl BenchReport {
    pub fn render(&self) -> String {
        let ms = |ns: u64| ns as f64 / 1e6;
        let per = |ns: u64| ns as f64 / 1e3 / self.frames as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "frames={} warmup={} wall_ms={:.3} fps={:.2} detector_invocations={} motion_active_frames={} events={}",
            self.frames,
            self.warmup,
            self.wall.as_secs_f64() * 1e3,
            self.fps,
            self.detector_invocations,
            self.motion_active_frames,
            self.events_fired
        );
        let st = &self.stages;
        for (name, ns) in [
            ("motion", st.motion_ns),
            ("detect", st.detect_ns),
            ("track", st.track_ns),
            ("classify", st.classify_ns),
        ] {
            let _ = writeln!(s, "stage={name} total_ms={:.3} per_frame_us={:.2}", ms(ns), per(ns));
        }
        s
    }
}

struct Discard;

impl EventSink for Discard {
    fn deliver(&mut self, _: &GunEvent) -> Result<(), SinkError> {
        Ok(())
    }
}

fn diff(a: StageTimes, b: StageTimes) -> StageTimes {
    StageTimes {
        motion_ns: a.motion_ns - b.motion_ns,
        detect_ns: a.detect_ns - b.detect_ns,
        track_ns: a.track_ns - b.track_ns,
        classify_ns: a.classify_ns - b.classify_ns,
    }
}

/// Runs frames through one pipeline and times everything after the warm-up.
/// Delivered events are discarded.
pub fn fps_bench<D, C, I, E>(
    cfg: PipelineConfig,
    detector: D,
    classifier: C,
    frames: I,
    limit: BenchLimit,
) -> Result<BenchReport, BenchError>
where
    D: Detector,
    C: Classifier,
    I: IntoIterator<Item = Result<Frame, E>>,
    E: std::error::Error + Send + Sync + 'static,
{
    let mut p = Pipeline::new(cfg, "bench", detector, classifier)?;
    let mut clock = InstantClock::default();
    let mut sink = Discard;
    let mut it = frames.into_iter();
    let mut warm = 0;
    while warm < WARMUP_FRAMES {
        match it.next() {
            Some(f) => p.process_frame_timed(&f.map_err(|e| BenchError::Source(Box::new(e)))?, &mut sink, &mut clock)?,
            None => break,
        };
        warm += 1;
    }
    let (t0, s0) = (p.stage_times(), p.summary());
    let start = Instant::now();
    let mut n = 0u64;
    loop {
        if limit.frames.is_some_and(|m| n >= m) || limit.duration.is_some_and(|d| start.elapsed() >= d) {
            break;
        }
        let Some(f) = it.next() else { break };
        p.process_frame_timed(&f.map_err(|e| BenchError::Source(Box::new(e)))?, &mut sink, &mut clock)?;
        n += 1;
    }
    let wall = start.elapsed();
    if n == 0 {
        return Err(BenchError::NoFrames);
    }
    let s1 = p.summary();
    Ok(BenchReport {
        frames: n,
        warmup: warm,
        wall,
        fps: n as f64 / wall.as_secs_f64().max(1e-9),
        detector_invocations: s1.detector_invocations - s0.detector_invocations,
        motion_active_frames: s1.motion_active_frames - s0.motion_active_frames,
        events_fired: s1.events_fired - s0.events_fired,
        stages: diff(p.stage_times(), t0),
    })
}
