//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails.

use std::collections::BTreeSet;
use std::convert::Infallible;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use gds::dataset::synthetic::{random_box, TreeSpec};
use gds::dataset::{
    extract_chips, parse_annotation, scan_dataset, serialize_annotation, split, AnnotatedObject, AnnotationRecord, Stage,
};
use gds::edge::{run_edge, SinkTarget, SyntheticScene};
use gds::evalio::{fps_bench, render_table, row_percentages, BenchLimit, TableKind, TableRow};
use gds::imaging;
use gds::proto::uplink::RetryPolicy;
use gds::proto::{decode_report, AckDisposition, DetectionReport};
use gds::server::http::{router, RunningServer};
use gds::server::{Disposition, FileStore, Service, ServiceOptions, SystemClock, WebhookNotifier};
use gds_core::eval::{classifier_metrics, detection_metrics, match_detections, match_image, roc, ConfusionCounts, ScoredBox};
use gds_core::{
    iou, BackendError, BoundingBox, Classifier, Detection, Detector, Frame, FrameSize, Image, NullBackend,
    OracleClassifier, PipelineConfig, PixelFormat,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn bb(a: u32, b: u32, c: u32, d: u32) -> BoundingBox {
    BoundingBox::new(a, b, c, d).unwrap()
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

// ---------------------------------------------------------------- e2e

#[derive(Clone)]
struct Hook(Arc<Mutex<Vec<Value>>>);

async fn receive(State(h): State<Hook>, Json(body): Json<Value>) -> StatusCode {
    h.0.lock().unwrap().push(body);
    StatusCode::OK
}

struct Cloud {
    _dir: tempfile::TempDir,
    svc: Arc<Service>,
    server: RunningServer,
    _hook: RunningServer,
    calls: Arc<Mutex<Vec<Value>>>,
}

fn cloud() -> Cloud {
    let calls = Arc::new(Mutex::new(Vec::new()));
    let app = Router::new().route("/hook", post(receive)).with_state(Hook(calls.clone()));
    let hook = RunningServer::start(app, "127.0.0.1:0").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let notifier =
        WebhookNotifier::new(vec![format!("{}/hook", hook.url())], "http://console.test", Duration::from_millis(5))
            .unwrap();
    let svc = Arc::new(Service::new(
        Arc::new(FileStore::open(dir.path().join("store")).unwrap()),
        Box::new(OracleClassifier::new(vec![0.97])),
        Arc::new(notifier),
        Arc::new(SystemClock),
        ServiceOptions::default(),
    ));
    let server = RunningServer::start(router(svc.clone(), None, None), "127.0.0.1:0").unwrap();
    Cloud {
        _dir: dir,
        svc,
        server,
        _hook: hook,
        calls,
    }
}

struct Counting {
    score: f64,
    calls: usize,
}

impl Classifier for Counting {
    fn classify(&mut self, _chip: &Image) -> Result<f64, BackendError> {
        self.calls += 1;
        Ok(self.score)
    }
}

fn edge_to(c: &Cloud, scene: &SyntheticScene, score: f64) -> (gds::edge::EdgeOutcome, usize) {
    let mut cls = Counting { score, calls: 0 };
    let target = SinkTarget::Http {
        url: format!("{}/api/v1/reports", c.server.url()),
        token: None,
        timeout: Duration::from_secs(5),
        policy: RetryPolicy::default(),
    };
    let out = run_edge(
        scene.iter().map(Ok),
        scene.oracle(0.9),
        &mut cls,
        PipelineConfig::default(),
        "cam01",
        target,
    )
    .unwrap();
    c.svc.wait_idle();
    (out, cls.calls)
}

fn e2e() -> Outcome {
    let scene = SyntheticScene::new(FrameSize::new(640, 360).unwrap(), 200);
    let t0 = Instant::now();
    let c = cloud();
    let (out, calls) = edge_to(&c, &scene, 0.9);
    let elapsed = t0.elapsed();
    let up = out.uplink.as_ref().unwrap();
    ensure!(out.summary.frames_processed == 200, "processed {}", out.summary.frames_processed);
    ensure!(out.summary.events_fired == 1, "events fired {}", out.summary.events_fired);
    ensure!(up.acks.len() == 1, "acks {:?}", up.acks);
    ensure!(up.count(|d| *d == AckDisposition::Accepted) == 1, "acks {:?}", up.acks);
    ensure!(up.undelivered.is_empty(), "undelivered {}", up.undelivered.len());
    // frame 0 is inactive, frames 1..=3 are the positives
    ensure!(calls == 3, "classifier calls {calls}");
    let alerts = c.svc.store().alerts();
    ensure!(alerts.len() == 1, "alerts {}", alerts.len());
    let a = &alerts[0];
    ensure!(a.timestamp_ms == scene.timing.at(3), "alert timestamp {}", a.timestamp_ms);
    ensure!(a.disposition == Disposition::Confirmed, "disposition {:?}", a.disposition);
    let hooks = c.calls.lock().unwrap().len();
    ensure!(hooks == 1, "webhook calls {hooks}");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");

    let low = cloud();
    let (out_low, _) = edge_to(&low, &scene, 0.4);
    let up_low = out_low.uplink.as_ref().unwrap();
    ensure!(out_low.summary.events_fired == 0, "0.4 fired {}", out_low.summary.events_fired);
    ensure!(up_low.acks.is_empty(), "0.4 acks {}", up_low.acks.len());
    ensure!(low.svc.store().alerts().is_empty(), "0.4 alerts stored");
    ensure!(low.calls.lock().unwrap().is_empty(), "0.4 webhook called");
    Ok(format!(
        "1 report at frame 3 (ts {}), 1 confirmed alert, 1 webhook, {:.2}s; 0.4 gives 0 reports",
        a.timestamp_ms,
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- motion gate

struct CountingDetector(u64);

impl Detector for CountingDetector {
    fn detect(&mut self, _frame: &Image, _ctx: &gds_core::backend::FrameContext) -> Result<Vec<Detection>, BackendError> {
        self.0 += 1;
        Ok(Vec::new())
    }
}

fn static_gate() -> Outcome {
    let scene = SyntheticScene::new(FrameSize::new(640, 360).unwrap(), 500);
    let img = scene.image(0);
    let frames = (0..500u64).map(|i| Frame {
        index: i,
        timestamp_ms: scene.timing.at(i),
        image: img.clone(),
    });
    let mut det = CountingDetector(0);
    let mut events = Vec::new();
    let summary = gds_core::run_pipeline(
        frames,
        &mut det,
        OracleClassifier::new(vec![1.0]),
        PipelineConfig::default(),
        "cam",
        &mut events,
    )
    .map_err(|e| e.to_string())?;
    ensure!(summary.frames_processed == 500, "processed {}", summary.frames_processed);
    ensure!(det.0 == 0, "detector called {} times", det.0);
    ensure!(summary.detector_invocations == 0, "summary says {}", summary.detector_invocations);
    Ok("500 identical frames, 0 detector invocations".into())
}

// ---------------------------------------------------------------- IoU

fn mask(b: &BoundingBox) -> [u16; 16] {
    let mut rows = [0u16; 16];
    let bits = ((1u32 << b.x_max()) - (1u32 << b.x_min())) as u16;
    for r in rows.iter_mut().take(b.y_max() as usize).skip(b.y_min() as usize) {
        *r = bits;
    }
    rows
}

fn iou_grid() -> Outcome {
    let lattice = [0u32, 1, 3, 4, 7, 10, 12, 15];
    let mut boxes = Vec::new();
    for (i, &x0) in lattice.iter().enumerate() {
        for &x1 in &lattice[i + 1..] {
            for (j, &y0) in lattice.iter().enumerate() {
                for &y1 in &lattice[j + 1..] {
                    boxes.push(bb(x0, y0, x1, y1));
                }
            }
        }
    }
    let masks: Vec<[u16; 16]> = boxes.iter().map(mask).collect();
    let mut worst = 0.0f64;
    let mut pairs = 0u64;
    for (a, ma) in boxes.iter().zip(&masks) {
        for (b, mb) in boxes.iter().zip(&masks) {
            let inter: u32 = ma.iter().zip(mb).map(|(x, y)| (x & y).count_ones()).sum();
            let union: u32 = ma.iter().zip(mb).map(|(x, y)| (x | y).count_ones()).sum();
            let expected = f64::from(inter) / f64::from(union);
            worst = worst.max((iou(a, b) - expected).abs());
            pairs += 1;
        }
    }
    ensure!(pairs >= 100_000, "only {pairs} pairs");
    ensure!(worst < 1e-12, "max error {worst:e}");
    Ok(format!("{pairs} pairs on the [0,16) lattice, max error {worst:e}"))
}

// ---------------------------------------------------------------- recall monotonicity

fn random_sets(rng: &mut ChaCha8Rng) -> Vec<(Vec<ScoredBox>, Vec<BoundingBox>)> {
    let frame = FrameSize::new(200, 200).unwrap();
    (0..rng.gen_range(1..=4))
        .map(|_| {
            let gt: Vec<BoundingBox> = (0..rng.gen_range(1..=5)).map(|_| random_box(rng, frame)).collect();
            let mut preds = Vec::new();
            for g in &gt {
                if rng.gen_bool(0.8) {
                    let jx = rng.gen_range(-(g.width() as i64) / 2..=g.width() as i64 / 2);
                    let jy = rng.gen_range(-(g.height() as i64) / 2..=g.height() as i64 / 2);
                    let [x0, y0, x1, y1] = g.coords().map(i64::from);
                    let moved = BoundingBox::from_signed(
                        (x0 + jx).max(0),
                        (y0 + jy).max(0),
                        (x1 + jx).clamp(1, 200),
                        (y1 + jy).clamp(1, 200),
                    );
                    if let Ok(bbox) = moved {
                        preds.push(ScoredBox {
                            score: rng.gen(),
                            bbox,
                        });
                    }
                }
            }
            for _ in 0..rng.gen_range(0..=3) {
                preds.push(ScoredBox {
                    score: rng.gen(),
                    bbox: random_box(rng, frame),
                });
            }
            (preds, gt)
        })
        .collect()
}

fn recall_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut violations = 0;
    let mut strict = 0;
    for _ in 0..1000 {
        let sets = random_sets(&mut rng);
        let view = || sets.iter().map(|(p, g)| (p.as_slice(), g.as_slice()));
        let lo = detection_metrics(&match_detections(view(), 0.3)).recall.unwrap();
        let hi = detection_metrics(&match_detections(view(), 0.5)).recall.unwrap();
        if lo < hi {
            violations += 1;
        }
        if lo > hi {
            strict += 1;
        }
    }
    ensure!(violations == 0, "{violations} of 1000 sets have recall@0.3 < recall@0.5");
    Ok(format!("1000 sets, recall@0.3 >= recall@0.5 everywhere ({strict} strictly greater)"))
}

// ---------------------------------------------------------------- metrics oracle

/// Greedy matching written out directly with exact rational IoU.
fn reference_match(preds: &[(u32, BoundingBox)], gt: &[BoundingBox], thr: (u64, u64)) -> (u64, u64, u64) {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].0.cmp(&preds[a].0));
    let mut taken = vec![false; gt.len()];
    let (mut tp, mut fp) = (0, 0);
    for i in order {
        let p = preds[i].1;
        let mut best: Option<(usize, u64, u64)> = None;
        for (j, g) in gt.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let inter = p.intersection_area(g);
            let union = p.area() + g.area() - inter;
            let better = match best {
                None => true,
                Some((_, bi, bu)) => inter * bu > bi * union,
            };
            if better {
                best = Some((j, inter, union));
            }
        }
        match best {
            Some((j, inter, union)) if inter * thr.1 >= thr.0 * union => {
                taken[j] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    (tp, fp, taken.iter().filter(|t| !**t).count() as u64)
}

fn sequences(universe: &[BoundingBox], max_len: usize) -> Vec<Vec<BoundingBox>> {
    let mut all = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for b in universe {
                let mut t: Vec<BoundingBox> = s.clone();
                t.push(*b);
                next.push(t);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (s, l) in scores.iter().zip(labels) {
        if !*l {
            continue;
        }
        for (t, m) in scores.iter().zip(labels) {
            if *m {
                continue;
            }
            pairs += 1.0;
            if s > t {
                wins += 1.0;
            } else if s == t {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn metrics_oracle() -> Outcome {
    let universe = [bb(0, 0, 4, 4), bb(1, 0, 5, 4), bb(2, 0, 6, 4), bb(0, 0, 2, 4), bb(1, 1, 5, 5)];
    let seqs = sequences(&universe, 4);
    let mut cases = 0u64;
    let mut batch: Vec<(Vec<ScoredBox>, Vec<BoundingBox>)> = Vec::new();
    let mut batch_ref = [(0u64, 0u64, 0u64); 2];
    let thresholds = [(0.3, (3u64, 10u64)), (0.5, (1, 2))];
    for preds in &seqs {
        for tied in [false, true] {
            let scored: Vec<(u32, BoundingBox)> =
                preds.iter().enumerate().map(|(i, b)| (if tied { 5 } else { 10 - i as u32 }, *b)).collect();
            let core_preds: Vec<ScoredBox> = scored
                .iter()
                .map(|(s, b)| ScoredBox {
                    score: f64::from(*s) / 10.0,
                    bbox: *b,
                })
                .collect();
            for gt in &seqs {
                for (k, (thr, exact)) in thresholds.iter().enumerate() {
                    let want = reference_match(&scored, gt, *exact);
                    let got = match_image(&core_preds, gt, *thr);
                    ensure!(
                        (got.true_pos, got.false_pos, got.false_neg) == want,
                        "preds {preds:?} tied={tied} gt {gt:?} thr {thr}: got {got:?}, want {want:?}"
                    );
                    let r = &mut batch_ref[k];
                    *r = (r.0 + want.0, r.1 + want.1, r.2 + want.2);
                    cases += 1;
                }
                batch.push((core_preds.clone(), gt.clone()));
                if batch.len() == 7 {
                    for (k, (thr, _)) in thresholds.iter().enumerate() {
                        let sum = match_detections(batch.iter().map(|(p, g)| (p.as_slice(), g.as_slice())), *thr);
                        let r = batch_ref[k];
                        ensure!((sum.true_pos, sum.false_pos, sum.false_neg) == r, "batched sum {sum:?} vs {r:?}");
                    }
                    batch.clear();
                    batch_ref = [(0, 0, 0); 2];
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=60);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let levels = rng.gen_range(2..=20);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..levels)) / f64::from(levels)).collect();
        let curve = roc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((curve.auc - pair_auc(&scores, &labels)).abs());
    }
    ensure!(worst <= 1e-9, "AUC differs from pair counting by {worst:e}");
    Ok(format!(
        "{cases} exhaustive matching cases (<=4 x <=4 boxes) agree with the reference; AUC max error {worst:e} over 1000 sets"
    ))
}

// ---------------------------------------------------------------- tables

fn detection_counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
    let g = bb(10, 10, 50, 50);
    let far = bb(100, 100, 140, 140);
    let mut images: Vec<(Vec<ScoredBox>, Vec<BoundingBox>)> = Vec::new();
    for _ in 0..tp {
        images.push((vec![ScoredBox { score: 0.9, bbox: g }], vec![g]));
    }
    for _ in 0..fn_ {
        images.push((vec![], vec![g]));
    }
    for _ in 0..fp {
        images.push((vec![ScoredBox { score: 0.6, bbox: far }], vec![]));
    }
    match_detections(images.iter().map(|(p, g)| (p.as_slice(), g.as_slice())), 0.3)
}

fn classifier_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Result<ConfusionCounts, String> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (n, score, label) in [(tp, 0.9, true), (fn_, 0.1, true), (fp, 0.8, false), (tn, 0.2, false)] {
        scores.extend(std::iter::repeat_n(score, n));
        labels.extend(std::iter::repeat_n(label, n));
    }
    Ok(classifier_metrics(&scores, &labels, 0.5).map_err(|e| e.to_string())?.counts)
}

fn tables() -> Outcome {
    let det = [
        ("VoVNet-v2-19_slim_light", detection_counts(239, 42, 26)),
        ("VoVNet19_slim", detection_counts(738, 95, 79)),
        ("Resnet18", detection_counts(311, 39, 35)),
    ];
    let rows: Vec<TableRow> = det
        .iter()
        .map(|(n, c)| TableRow {
            name: n.to_string(),
            counts: *c,
        })
        .collect();
    let t5 = render_table(TableKind::Detection, 0.3, &rows);
    ensure!(t5 == std::fs::read_to_string(golden("table5.txt")).unwrap(), "detection table differs:\n{t5}");

    let cls = [
        ("Resnet18", classifier_counts(984, 48, 14, 932)?),
        ("ResNet34", classifier_counts(991, 43, 7, 937)?),
        ("Resnet50", classifier_counts(995, 42, 3, 938)?),
    ];
    let rows: Vec<TableRow> = cls
        .iter()
        .map(|(n, c)| TableRow {
            name: n.to_string(),
            counts: *c,
        })
        .collect();
    let t6 = render_table(TableKind::Classifier, 0.5, &rows);
    ensure!(t6 == std::fs::read_to_string(golden("table6.txt")).unwrap(), "classifier table differs:\n{t6}");

    let planted = cls[2].1;
    ensure!(planted.true_pos + planted.false_neg == 998, "positives {planted:?}");
    ensure!(planted.false_pos + planted.true_neg == 980, "negatives {planted:?}");
    let pct = row_percentages(TableKind::Classifier, &planted).map(|p| p.unwrap_or_default());
    ensure!(pct == ["97.72", "99.70", "95.95"], "planted set gives {pct:?}");
    Ok("table goldens match; planted 998/980 set gives 97.72 / 99.70 / 95.95".into())
}

// ---------------------------------------------------------------- protocol

fn fake_jpeg(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut v = vec![0xFF, 0xD8];
    let n = rng.gen_range(0..64);
    v.extend((0..n).map(|_| rng.gen::<u8>()));
    v.extend([0xFF, 0xD9]);
    v
}

fn random_report(rng: &mut ChaCha8Rng) -> DetectionReport {
    const POOL: &[char] = &['a', 'Z', '0', '-', '_', ' ', '"', '\\', '/', '\n', '\t', '\u{1}', 'é', '漢', '🙂'];
    let device_id: String = (0..rng.gen_range(1..=16)).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect();
    let x0 = rng.gen_range(0..u32::MAX - 1);
    let y0 = rng.gen_range(0..u32::MAX - 1);
    let bbox = bb(x0, y0, rng.gen_range(x0 + 1..=u32::MAX), rng.gen_range(y0 + 1..=u32::MAX));
    let detector_score = match rng.gen_range(0..8) {
        0 => 0.0,
        1 => 1.0,
        2 => f64::MIN_POSITIVE,
        _ => rng.gen(),
    };
    DetectionReport {
        device_id,
        timestamp_ms: rng.gen(),
        track_id: rng.gen(),
        bbox,
        detector_score,
        chip_jpeg: fake_jpeg(rng),
        snapshot_jpeg: fake_jpeg(rng),
        extra_snapshots: (0..rng.gen_range(0..=3)).map(|_| fake_jpeg(rng)).collect(),
    }
}

fn marker_jpeg(tag: &[u8]) -> Vec<u8> {
    let mut v = vec![0xFF, 0xD8, 0xFF, 0xE0];
    v.extend_from_slice(tag);
    v.extend_from_slice(&[0xFF, 0xD9]);
    v
}

fn protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for i in 0..10_000 {
        let r = random_report(&mut rng);
        let bytes = r.encode();
        let back = decode_report(&bytes).map_err(|e| format!("report {i}: {e}"))?;
        ensure!(back == r, "report {i} changed in round trip");
        ensure!(back.encode() == bytes, "report {i} re-encodes differently");
    }

    let reference = DetectionReport {
        device_id: "cam01".into(),
        timestamp_ms: 1_700_000_000_123,
        track_id: 7,
        bbox: bb(120, 64, 184, 128),
        detector_score: 0.875,
        chip_jpeg: marker_jpeg(b"chip"),
        snapshot_jpeg: marker_jpeg(b"snapshot"),
        extra_snapshots: vec![marker_jpeg(b"extra-1"), marker_jpeg(b"extra-2")],
    };
    ensure!(reference.encode() == std::fs::read(golden("report_v1.json")).unwrap(), "golden bytes differ");

    let dir = tempfile::tempdir().unwrap();
    let svc = Arc::new(Service::new(
        Arc::new(FileStore::open(dir.path()).unwrap()),
        Box::new(OracleClassifier::new(vec![0.9])),
        Arc::new(WebhookNotifier::new(vec![], "http://console.test", Duration::from_millis(5)).unwrap()),
        Arc::new(SystemClock),
        ServiceOptions::default(),
    ));
    let chip = imaging::encode_jpeg(&Image::filled(FrameSize::new(32, 32).unwrap(), PixelFormat::Rgb8, 200)).unwrap();
    let snap = imaging::encode_jpeg(&Image::filled(FrameSize::new(200, 200).unwrap(), PixelFormat::Rgb8, 50)).unwrap();
    let live = DetectionReport {
        chip_jpeg: chip,
        snapshot_jpeg: snap,
        extra_snapshots: vec![],
        ..reference
    };
    let bytes = live.encode();
    let first = svc.ingest_bytes(&bytes).map_err(|e| e.to_string())?;
    let second = svc.ingest_bytes(&bytes).map_err(|e| e.to_string())?;
    svc.wait_idle();
    ensure!(first.disposition == AckDisposition::Accepted, "first ack {first:?}");
    ensure!(second.disposition == AckDisposition::Duplicate, "second ack {second:?}");
    ensure!(first.report_id == second.report_id, "report ids differ");
    let n = svc.store().alerts().len();
    ensure!(n == 1, "{n} alerts after duplicate ingest");
    Ok("10000 random round trips, golden bytes match, duplicate ingest stores 1 alert".into())
}

// ---------------------------------------------------------------- dataset

fn random_annotation(rng: &mut ChaCha8Rng) -> AnnotationRecord {
    const NAMES: &[&str] = &["gun", "knife", "<odd & \"name\">", "person's"];
    const FILES: &[&str] = &["a.jpg", "b & c.jpg", "ünï <x>.jpg", "deep/dir/file.JPG"];
    let size = FrameSize::new(rng.gen_range(1..=4000), rng.gen_range(1..=4000)).unwrap();
    let objects = (0..rng.gen_range(0..=6))
        .map(|_| {
            let w = rng.gen_range(1..=size.width());
            let h = rng.gen_range(1..=size.height());
            let x = rng.gen_range(0..=size.width() - w);
            let y = rng.gen_range(0..=size.height() - h);
            AnnotatedObject::new(NAMES[rng.gen_range(0..NAMES.len())], bb(x, y, x + w, y + h))
        })
        .collect();
    AnnotationRecord {
        filename: FILES[rng.gen_range(0..FILES.len())].into(),
        width: size.width().into(),
        height: size.height().into(),
        depth: rng.gen_range(1..=4),
        objects,
    }
}

fn chip_dims(dir: &Path) -> Result<Vec<(u32, u32)>, String> {
    let mut dims = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let img = imaging::load(&e.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
        dims.push((img.width(), img.height()));
    }
    Ok(dims)
}

fn dataset() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    let spec = TreeSpec::random(2024, 40, 15, 12, 9);
    spec.write(&root).map_err(|e| e.to_string())?;
    let index = scan_dataset(&root).map_err(|e| e.to_string())?;
    ensure!(index.counts == spec.counts(), "scan {:?} vs built {:?}", index.counts, spec.counts());
    ensure!(index.gun_box_count() == spec.box_count(), "boxes {} vs {}", index.gun_box_count(), spec.box_count());

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..1000 {
        let rec = random_annotation(&mut rng);
        let xml = serialize_annotation(&rec);
        let back = parse_annotation(xml.as_bytes()).map_err(|e| format!("annotation {i}: {e}"))?;
        ensure!(back == rec, "annotation {i} changed in round trip");
        ensure!(serialize_annotation(&back) == xml, "annotation {i} re-serialises differently");
    }

    let chips = dir.path().join("chips");
    let report = extract_chips(&index, &chips, 112).map_err(|e| e.to_string())?;
    ensure!(report.findings.is_empty(), "chip findings {:?}", report.findings);
    let dims = chip_dims(&chips)?;
    ensure!(report.written == spec.box_count() && dims.len() == spec.box_count(), "{} chips for {} boxes", dims.len(), spec.box_count());
    ensure!(dims.iter().all(|d| *d == (112, 112)), "chip sizes {:?}", dims.iter().collect::<BTreeSet<_>>());

    let a = split(&index, Stage::Detector, 0.2, 5).map_err(|e| e.to_string())?;
    let b = split(&index, Stage::Detector, 0.2, 5).map_err(|e| e.to_string())?;
    ensure!(a == b, "same seed gave different splits");
    let others = split(&index, Stage::Detector, 0.2, 6).map_err(|e| e.to_string())?;
    ensure!(others != a, "seeds 5 and 6 gave the same split");
    let all: BTreeSet<&PathBuf> = a.train.iter().chain(&a.test).collect();
    ensure!(all.len() == 55 && a.test.len() == 11, "split sizes train={} test={}", a.train.len(), a.test.len());
    let gun_test = a.test.iter().filter(|p| p.starts_with("detector/gun")).count();
    ensure!(gun_test == 8, "gun test items {gun_test}");
    Ok(format!(
        "scan matches construction, 1000 annotation round trips, {} chips of 112x112, seeded split reproducible",
        dims.len()
    ))
}

// ---------------------------------------------------------------- throughput

fn throughput() -> Outcome {
    let scene = SyntheticScene::new(FrameSize::new(640, 360).unwrap(), 1010);
    let frames = (0..scene.frames).map(|i| Ok::<_, Infallible>(scene.frame(i)));
    let report = fps_bench(
        PipelineConfig::default(),
        NullBackend,
        OracleClassifier::new(vec![1.0]),
        frames,
        BenchLimit::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(report.frames == 1000, "measured {} frames", report.frames);
    ensure!(report.fps >= 100.0, "{:.1} FPS", report.fps);
    Ok(format!("{:.0} FPS at 640x360 over {} frames with NullBackend", report.fps, report.frames))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 9] = [
        ("e2e-synthetic-scene", e2e),
        ("motion-gate-static", static_gate),
        ("iou-grid-oracle", iou_grid),
        ("recall-monotonic-in-iou", recall_monotone),
        ("metrics-oracle", metrics_oracle),
        ("table-format", tables),
        ("protocol", protocol),
        ("dataset", dataset),
        ("throughput", throughput),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
