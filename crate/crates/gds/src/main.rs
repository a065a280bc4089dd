//! `gds`: command-line entry point.
//!
//! Exit codes: 0 success, 1 validation findings, 2 usage error, 3 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gds_core::eval::{self, RocCurve};
use gds_core::{BoundingBox, FrameSize, PipelineConfig};

use gds::backends::{classifier_from_spec, detector_from_spec};
use gds::dataset::{self, scan_dataset, BinSpec, Category, DatasetIndex, Stage};
use gds::edge::{self, EdgeFileConfig, ImageDirSource, RawVideoSource, SinkTarget, SourceError, SyntheticScene, Timing};
use gds::evalio::{self, BenchLimit, TableKind, TableRow};
use gds::proto::uplink::RetryPolicy;
use gds::proto::{decode_report, DetectionReport};
use gds::server::config::{load_file, PartialServerConfig, ServerConfig};
use gds::server::{FileStore, Service, ServiceOptions, SystemClock};
use gds::{imaging, server};

#[derive(Parser)]
#[command(name = "gds", version, about = "Gun detection system: dataset tools, edge runner, alert server, evaluation")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dataset tree tooling.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Edge device frame loop.
    #[command(subcommand)]
    Edge(EdgeCmd),
    /// Alert service.
    #[command(subcommand)]
    Server(ServerCmd),
    /// Metrics, ROC and throughput.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Report envelope encoding.
    #[command(subcommand)]
    Proto(ProtoCmd),
}

#[derive(Args)]
struct RootArg {
    /// Dataset root directory.
    #[arg(long)]
    root: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Detector,
    Classifier,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Detector => Stage::Detector,
            StageArg::Classifier => Stage::Classifier,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Text,
    Kv,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Count images per stage and category.
    Scan(RootArg),
    /// List every problem in the tree; exits 1 when there are any.
    Validate(RootArg),
    /// Image area, box area and objects-per-image histograms.
    Stats {
        #[command(flatten)]
        root: RootArg,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Crop every ground-truth gun box to a square chip.
    Chips {
        #[command(flatten)]
        root: RootArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 112)]
        size: u32,
    },
    /// Stratified train/test split written as `train.txt` and `test.txt`.
    Split {
        #[command(flatten)]
        root: RootArg,
        #[arg(long, value_enum)]
        stage: StageArg,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Directory of numbered image files.
    #[arg(long, group = "source")]
    frames: Option<PathBuf>,
    /// Headerless RGB24 file; needs --size.
    #[arg(long, group = "source", requires = "size")]
    raw: Option<PathBuf>,
    /// Generate this many frames of a moving square.
    #[arg(long, group = "source")]
    synthetic: Option<u64>,
    /// Frame size as WIDTHxHEIGHT for --raw and --synthetic.
    #[arg(long, value_parser = parse_size)]
    size: Option<FrameSize>,
}

#[derive(Subcommand)]
enum EdgeCmd {
    /// Run the frame loop over a finite source and send confirmed events.
    Run(Box<EdgeRunArgs>),
    /// Write a synthetic frame sequence and the matching oracle script.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        frames: u64,
        #[arg(long, value_parser = parse_size, default_value = "640x360")]
        size: FrameSize,
        #[arg(long, default_value_t = 0.9)]
        score: f64,
    },
}

#[derive(Args)]
struct EdgeRunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Oracle detector script; shorthand for `--detector oracle:<path>`.
    #[arg(long, conflicts_with = "detector")]
    oracle: Option<PathBuf>,
    /// `null` or `oracle:<script>`.
    #[arg(long, env = "GDS_DETECTOR")]
    detector: Option<String>,
    /// First-level classifier: `constant:<score>` or `oracle:<file>`.
    #[arg(long, env = "GDS_EDGE_CLASSIFIER")]
    classifier: Option<String>,
    /// Ingest URL of the alert server.
    #[arg(long, env = "GDS_SINK")]
    sink: Option<String>,
    /// Write envelopes to this directory instead of posting them.
    #[arg(long, env = "GDS_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, env = "GDS_DEVICE_ID")]
    device: Option<String>,
    #[arg(long, env = "GDS_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[arg(long, env = "GDS_FPS")]
    fps: Option<u32>,
    /// Send attempts per report before it is requeued.
    #[arg(long, default_value_t = 8)]
    max_attempts: u32,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    /// TOML file with edge settings and a `[pipeline]` table.
    #[arg(long, env = "GDS_EDGE_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ServerCmd {
    /// Serve the HTTP API until interrupted.
    Run(Box<ServerArgs>),
    /// Copy chips of alerts reviewed as false positive into a classifier `other` folder.
    ExportNegatives {
        #[arg(long, env = "GDS_STORAGE_ROOT")]
        storage_root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ServerArgs {
    #[arg(long, env = "GDS_LISTEN")]
    listen: Option<String>,
    #[arg(long, env = "GDS_STORAGE_ROOT")]
    storage_root: Option<PathBuf>,
    #[arg(long, env = "GDS_CLASSIFIER_THRESHOLD")]
    classifier_threshold: Option<f64>,
    /// Second-level classifier: `constant:<score>` or `oracle:<file>`.
    #[arg(long, env = "GDS_CLASSIFIER")]
    classifier: Option<String>,
    /// Webhook URL; repeat or comma-separate for several.
    #[arg(long = "webhook", env = "GDS_WEBHOOKS", value_delimiter = ',')]
    webhooks: Vec<String>,
    #[arg(long, env = "GDS_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[arg(long, env = "GDS_PUBLIC_URL")]
    public_url: Option<String>,
    #[arg(long, env = "GDS_CONSOLE_DIR")]
    console_dir: Option<PathBuf>,
    #[arg(long, env = "GDS_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Detection Acc/Rec/Pre at an IoU threshold.
    Detect {
        /// Prediction file; repeat for several table rows.
        #[arg(long = "pred", required = true)]
        preds: Vec<PathBuf>,
        /// Row name per prediction file (default: file stem).
        #[arg(long = "name")]
        names: Vec<String>,
        /// Dataset root with the ground truth.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        iou: f64,
        /// Only evaluate images listed in this manifest.
        #[arg(long)]
        subset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Classifier Acc/Rec/Pre at a score threshold.
    Classify {
        #[arg(long = "scores", required = true)]
        scores: Vec<PathBuf>,
        #[arg(long = "name")]
        names: Vec<String>,
        /// Dataset root for labels missing from the score file.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// ROC curve and its area.
    Roc {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value = "ROC")]
        title: String,
    },
    /// Frame-loop throughput after a 10-frame warm-up.
    Bench {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value = "null")]
        detector: String,
        #[arg(long, default_value = "constant:1.0")]
        classifier: String,
        /// Stop after this many measured frames.
        #[arg(long)]
        max_frames: Option<u64>,
        /// Stop after this many seconds of measurement.
        #[arg(long)]
        duration_s: Option<f64>,
    },
}

#[derive(Subcommand)]
enum ProtoCmd {
    /// Build an envelope from images and metadata; writes JSON to stdout.
    Encode {
        #[arg(long)]
        device: String,
        #[arg(long)]
        track: u64,
        #[arg(long)]
        timestamp_ms: i64,
        /// `xmin,ymin,xmax,ymax` in snapshot pixels.
        #[arg(long = "box", value_parser = parse_box)]
        bbox: BoundingBox,
        #[arg(long)]
        score: f64,
        #[arg(long)]
        chip: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long = "extra")]
        extra: Vec<PathBuf>,
    },
    /// Validate an envelope and print its fields; exits 1 when invalid.
    Decode {
        /// Envelope file, or `-` for stdin.
        #[arg(default_value = "-")]
        input: PathBuf,
    },
}

fn parse_size(s: &str) -> Result<FrameSize, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let (w, h) = (w.parse::<u32>().map_err(|e| e.to_string())?, h.parse::<u32>().map_err(|e| e.to_string())?);
    FrameSize::new(w, h).map_err(|e| e.to_string())
}

fn parse_box(s: &str) -> Result<BoundingBox, String> {
    gds_core::backend::parse_box_csv(s).ok_or_else(|| format!("bad box {s:?}"))
}

enum Status {
    Ok,
    Findings,
}

/// An error caused by the invocation rather than by the run.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).init();
    match run(cli.cmd) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Findings) => ExitCode::from(1),
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cmd: Cmd) -> Result<Status> {
    match cmd {
        Cmd::Dataset(c) => dataset_cmd(c),
        Cmd::Edge(EdgeCmd::Run(a)) => edge_run(*a),
        Cmd::Edge(EdgeCmd::Synth {
            out,
            frames,
            size,
            score,
        }) => {
            let scene = SyntheticScene::new(size, frames);
            scene.write_frames(&out.join("frames"))?;
            let script = out.join("oracle.tsv");
            std::fs::write(&script, scene.oracle_script(score)).with_context(|| script.display().to_string())?;
            println!("frames={frames} size={size} dir={} oracle={}", out.join("frames").display(), script.display());
            Ok(Status::Ok)
        }
        Cmd::Server(c) => server_cmd(c),
        Cmd::Eval(c) => eval_cmd(c),
        Cmd::Proto(c) => proto_cmd(c),
    }
}

fn scan(root: &Path) -> Result<DatasetIndex> {
    scan_dataset(root).with_context(|| format!("scanning {}", root.display()))
}

fn dataset_cmd(c: DatasetCmd) -> Result<Status> {
    match c {
        DatasetCmd::Scan(r) => {
            let ix = scan(&r.root)?;
            for stage in [Stage::Detector, Stage::Classifier] {
                for cat in [Category::Gun, Category::Other] {
                    println!("{}.{}={}", stage.dir_name(), cat.dir_name(), ix.counts.get(stage, cat));
                }
            }
            println!("total={}", ix.counts.total());
            println!("annotations={}", ix.annotated().count());
            println!("gun_boxes={}", ix.gun_box_count());
            println!("findings={}", ix.scan_findings.len());
            for f in &ix.scan_findings {
                eprintln!("{f}");
            }
            Ok(Status::Ok)
        }
        DatasetCmd::Validate(r) => {
            let ix = scan(&r.root)?;
            let findings = dataset::validate(&ix);
            for f in &findings {
                println!("{f}");
            }
            eprintln!("{} finding(s)", findings.len());
            Ok(if findings.is_empty() { Status::Ok } else { Status::Findings })
        }
        DatasetCmd::Stats { root, format } => {
            let report = dataset::compute_stats(&scan(&root.root)?, BinSpec::default());
            print!(
                "{}",
                match format {
                    Format::Text => report.render_text(),
                    Format::Kv => report.render_kv(),
                }
            );
            Ok(Status::Ok)
        }
        DatasetCmd::Chips { root, out, size } => {
            let r = dataset::extract_chips(&scan(&root.root)?, &out, size)?;
            for f in &r.findings {
                eprintln!("{f}");
            }
            println!("chips={} skipped={}", r.written, r.findings.len());
            Ok(if r.findings.is_empty() { Status::Ok } else { Status::Findings })
        }
        DatasetCmd::Split {
            root,
            stage,
            test_fraction,
            seed,
            out,
        } => {
            let r = dataset::split(&scan(&root.root)?, stage.into(), test_fraction, seed)
                .map_err(|e| usage(e.to_string()))?;
            dataset::write_manifests(&r, &out).with_context(|| out.display().to_string())?;
            println!("train={} test={} seed={seed}", r.train.len(), r.test.len());
            Ok(Status::Ok)
        }
    }
}

type FrameIter = Box<dyn Iterator<Item = Result<gds_core::Frame, SourceError>>>;

fn open_source(s: &SourceArgs, timing: Timing, default_synthetic: Option<u64>) -> Result<FrameIter> {
    if let Some(dir) = &s.frames {
        return Ok(Box::new(ImageDirSource::open(dir, timing)?));
    }
    if let Some(path) = &s.raw {
        let size = s.size.ok_or_else(|| usage("--raw needs --size"))?;
        return Ok(Box::new(RawVideoSource::open(path, size, timing)?));
    }
    match s.synthetic.or(default_synthetic) {
        Some(n) => {
            let size = s.size.unwrap_or(FrameSize::new(640, 360).expect("nonzero"));
            let scene = SyntheticScene {
                timing,
                ..SyntheticScene::new(size, n)
            };
            Ok(Box::new((0..n).map(move |i| Ok(scene.frame(i)))))
        }
        None => Err(usage("one of --frames, --raw or --synthetic is required")),
    }
}

fn edge_run(a: EdgeRunArgs) -> Result<Status> {
    let file = match &a.config {
        Some(p) => edge::load_edge_config(p)?,
        None => EdgeFileConfig::default(),
    };
    let device = a.device.or(file.device_id).ok_or_else(|| usage("--device is required"))?;
    let fps = a.fps.or(file.fps).unwrap_or(25);
    if fps == 0 {
        return Err(usage("--fps must be at least 1"));
    }
    let detector_spec = match a.oracle {
        Some(p) => format!("oracle:{}", p.display()),
        None => a.detector.or(file.detector).unwrap_or_else(|| "null".into()),
    };
    let classifier_spec = a.classifier.or(file.classifier).unwrap_or_else(|| "constant:1.0".into());
    let cfg = file.pipeline.apply(PipelineConfig::default());
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let target = match (a.sink.or(file.sink), a.out_dir.or(file.out_dir)) {
        (Some(url), None) => SinkTarget::Http {
            url,
            token: a.token.or(file.token).filter(|t| !t.is_empty()),
            timeout: Duration::from_millis(a.timeout_ms),
            policy: RetryPolicy {
                max_attempts: a.max_attempts.max(1),
                ..RetryPolicy::default()
            },
        },
        (None, Some(dir)) => SinkTarget::Directory(dir),
        _ => return Err(usage("exactly one of --sink or --out-dir is required")),
    };
    let timing = Timing {
        start_ms: 0,
        interval_ms: 1000 / i64::from(fps),
    };
    let frames = open_source(&a.source, timing, None)?;
    let detector = detector_from_spec(&detector_spec).map_err(|e| usage(e.to_string()))?;
    let classifier = classifier_from_spec(&classifier_spec).map_err(|e| usage(e.to_string()))?;
    let out = edge::run_edge(frames, detector, classifier, cfg, &device, target)?;
    let s = out.summary;
    println!(
        "frames={} detections={} events={}",
        s.frames_processed, s.detector_invocations, s.events_fired
    );
    eprintln!(
        "motion_active={} boxes={} tracks={} classifications={} delivered={} dropped={} pending={}",
        s.motion_active_frames,
        s.detections,
        s.tracks_created,
        s.classifications,
        s.events_delivered,
        s.events_dropped,
        s.events_pending
    );
    if let Some(u) = out.uplink {
        eprintln!(
            "uplink acks={} attempts={} requeued={} refused={} undelivered={}",
            u.acks.len(),
            u.attempts,
            u.requeued,
            u.refused,
            u.undelivered.len()
        );
        if !u.undelivered.is_empty() || u.refused > 0 {
            bail!("{} report(s) undelivered, {} refused", u.undelivered.len(), u.refused);
        }
    }
    Ok(Status::Ok)
}

fn server_cmd(c: ServerCmd) -> Result<Status> {
    match c {
        ServerCmd::Run(a) => {
            let a = *a;
            let file = match &a.config {
                Some(p) => load_file(p)?,
                None => PartialServerConfig::default(),
            };
            let flags = PartialServerConfig {
                listen: a.listen,
                storage_root: a.storage_root,
                classifier_threshold: a.classifier_threshold,
                classifier: a.classifier,
                webhooks: (!a.webhooks.is_empty()).then_some(a.webhooks),
                token: a.token,
                public_url: a.public_url,
                console_dir: a.console_dir,
            };
            let cfg = ServerConfig::resolve(flags.or(file)).map_err(|e| usage(e.to_string()))?;
            let (svc, server) = cfg.start()?;
            println!("listening={}", server.url());
            tracing::info!(storage = %cfg.storage_root.display(), "serving");
            tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()?
                .block_on(tokio::signal::ctrl_c())?;
            server.stop()?;
            svc.wait_idle();
            Ok(Status::Ok)
        }
        ServerCmd::ExportNegatives { storage_root, out } => {
            let svc = Service::new(
                Arc::new(FileStore::open(&storage_root)?),
                Box::new(gds_core::ConstantClassifier(1.0)),
                Arc::new(server::notify::NoNotifier),
                Arc::new(SystemClock),
                ServiceOptions::default(),
            );
            let written = svc.export_hard_negatives(&out)?;
            println!("exported={}", written.len());
            Ok(Status::Ok)
        }
    }
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn row_names(paths: &[PathBuf], names: &[String]) -> Result<Vec<String>> {
    if !names.is_empty() && names.len() != paths.len() {
        return Err(usage(format!("{} --name values for {} input files", names.len(), paths.len())));
    }
    Ok(paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            names.get(i).cloned().unwrap_or_else(|| {
                p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            })
        })
        .collect())
}

fn print_rows(kind: TableKind, thr: f64, rows: &[TableRow], format: Format) {
    match format {
        Format::Text => print!("{}", evalio::render_table(kind, thr, rows)),
        Format::Kv => print!("{}", evalio::render_kv(kind, thr, rows)),
    }
}

fn labelled(scores: &Path, gt: Option<&DatasetIndex>) -> Result<(Vec<f64>, Vec<bool>)> {
    let lines = evalio::parse_scores(&read_text(scores)?).with_context(|| scores.display().to_string())?;
    evalio::label_scores(&lines, gt).with_context(|| scores.display().to_string())
}

fn eval_cmd(c: EvalCmd) -> Result<Status> {
    match c {
        EvalCmd::Detect {
            preds,
            names,
            gt,
            iou,
            subset,
            format,
        } => {
            if !(iou > 0.0 && iou <= 1.0) {
                return Err(usage(format!("--iou {iou} must be in (0, 1]")));
            }
            let names = row_names(&preds, &names)?;
            let index = scan(&gt)?;
            let subset = subset.map(|p| read_text(&p).map(|t| evalio::parse_manifest(&t))).transpose()?;
            let mut rows = Vec::new();
            for (p, name) in preds.iter().zip(names) {
                let parsed = evalio::parse_predictions(&read_text(p)?).with_context(|| p.display().to_string())?;
                let r = evalio::evaluate_detections(&index, &parsed, iou, subset.as_ref())
                    .with_context(|| p.display().to_string())?;
                if r.ignored_predictions > 0 {
                    eprintln!("{}: {} prediction(s) outside the evaluated images", p.display(), r.ignored_predictions);
                }
                rows.push(TableRow { name, counts: r.counts });
            }
            print_rows(TableKind::Detection, iou, &rows, format);
            Ok(Status::Ok)
        }
        EvalCmd::Classify {
            scores,
            names,
            gt,
            threshold,
            format,
        } => {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(usage(format!("--threshold {threshold} must be in (0, 1]")));
            }
            let names = row_names(&scores, &names)?;
            let index = gt.as_deref().map(scan).transpose()?;
            let mut rows = Vec::new();
            for (p, name) in scores.iter().zip(names) {
                let (s, l) = labelled(p, index.as_ref())?;
                let r = eval::classifier_metrics(&s, &l, threshold).with_context(|| p.display().to_string())?;
                rows.push(TableRow { name, counts: r.counts });
            }
            print_rows(TableKind::Classifier, threshold, &rows, format);
            Ok(Status::Ok)
        }
        EvalCmd::Roc {
            scores,
            gt,
            csv,
            svg,
            title,
        } => {
            let index = gt.as_deref().map(scan).transpose()?;
            let (s, l) = labelled(&scores, index.as_ref())?;
            let curve: RocCurve = eval::roc(&s, &l).with_context(|| scores.display().to_string())?;
            if let Some(p) = csv {
                std::fs::write(&p, evalio::roc_csv(&curve)).with_context(|| p.display().to_string())?;
            }
            if let Some(p) = svg {
                std::fs::write(&p, evalio::roc_svg(&curve, &title)).with_context(|| p.display().to_string())?;
            }
            println!("auc={} points={}", curve.auc, curve.points.len());
            Ok(Status::Ok)
        }
        EvalCmd::Bench {
            source,
            detector,
            classifier,
            max_frames,
            duration_s,
        } => {
            let duration = match duration_s {
                Some(d) if d.is_finite() && d > 0.0 => Some(Duration::from_secs_f64(d)),
                Some(d) => return Err(usage(format!("--duration-s {d} must be positive"))),
                None => None,
            };
            let frames = open_source(&source, Timing::default(), Some(1010))?;
            let det = detector_from_spec(&detector).map_err(|e| usage(e.to_string()))?;
            let cls = classifier_from_spec(&classifier).map_err(|e| usage(e.to_string()))?;
            let r = evalio::fps_bench(
                PipelineConfig::default(),
                det,
                cls,
                frames,
                BenchLimit {
                    frames: max_frames,
                    duration,
                },
            )?;
            print!("{}", r.render());
            Ok(Status::Ok)
        }
    }
}

fn proto_cmd(c: ProtoCmd) -> Result<Status> {
    match c {
        ProtoCmd::Encode {
            device,
            track,
            timestamp_ms,
            bbox,
            score,
            chip,
            snapshot,
            extra,
        } => {
            let read = |p: &Path| std::fs::read(p).with_context(|| format!("reading {}", p.display()));
            let r = DetectionReport {
                device_id: device,
                timestamp_ms,
                track_id: track,
                bbox,
                detector_score: score,
                chip_jpeg: read(&chip)?,
                snapshot_jpeg: read(&snapshot)?,
                extra_snapshots: extra.iter().map(|p| read(p)).collect::<Result<_>>()?,
            };
            let bytes = r.encode();
            // validate as the server would
            if let Err(e) = decode_report(&bytes) {
                return Err(usage(format!("report would be rejected: {e}")));
            }
            let snap = imaging::decode(&r.snapshot_jpeg)?;
            if !bbox.fits_within(snap.size()) {
                return Err(usage(format!("box {bbox} is outside the {} snapshot", snap.size())));
            }
            println!("{}", String::from_utf8(bytes).expect("JSON is UTF-8"));
            Ok(Status::Ok)
        }
        ProtoCmd::Decode { input } => {
            let bytes = if input.as_os_str() == "-" {
                let mut v = Vec::new();
                std::io::Read::read_to_end(&mut std::io::stdin(), &mut v)?;
                v
            } else {
                std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?
            };
            match decode_report(&bytes) {
                Ok(r) => {
                    println!(
                        "device_id={} timestamp_ms={} track_id={} box={} detector_score={} chip_bytes={} snapshot_bytes={} extra_snapshots={}",
                        r.device_id,
                        r.timestamp_ms,
                        r.track_id,
                        r.bbox,
                        r.detector_score,
                        r.chip_jpeg.len(),
                        r.snapshot_jpeg.len(),
                        r.extra_snapshots.len()
                    );
                    Ok(Status::Ok)
                }
                Err(e) => {
                    eprintln!("invalid report: {e}");
                    Ok(Status::Findings)
                }
            }
        }
    }
}
