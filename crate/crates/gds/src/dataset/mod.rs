//! Dataset tree tooling.
//!
//! Expected layout under the root:
//!
//! ```text
//! detector/[split/]gun/JpegImages/*.jpg
//! detector/[split/]gun/Annotations/*.xml
//! detector/[split/]other/*.jpg
//! classifier/[split/]gun/*.jpg
//! classifier/[split/]other/*.jpg
//! ```
//!
//! Images and annotations inside a detector `gun` folder are paired by file
//! stem. Anything the scanner cannot make sense of becomes a [`Finding`].

pub mod annotation;
mod chips;
mod split;
mod stats;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

pub use annotation::{
    parse_annotation, parse_annotation_lenient, serialize_annotation, AnnotatedObject, AnnotationError,
    AnnotationRecord,
};
pub use chips::{chip_file_name, extract_chips, ChipReport};
pub use split::{split, write_manifests, SplitError, SplitResult};
pub use stats::{compute_stats, BinSpec, Histogram, StatsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Detector,
    Classifier,
}

impl Stage {
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Detector => "detector",
            Stage::Classifier => "classifier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Gun,
    Other,
}

impl Category {
    pub fn dir_name(self) -> &'static str {
        match self {
            Category::Gun => "gun",
            Category::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FindingKind {
    OrphanImage,
    OrphanAnnotation,
    DuplicateStem,
    UnreadableFile,
    MalformedAnnotation,
    FilenameMismatch,
    BadImageSize,
    DegenerateBox,
    BoxOutOfBounds,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingKind::OrphanImage => "orphan image",
            FindingKind::OrphanAnnotation => "orphan annotation",
            FindingKind::DuplicateStem => "duplicate stem",
            FindingKind::UnreadableFile => "unreadable file",
            FindingKind::MalformedAnnotation => "malformed annotation",
            FindingKind::FilenameMismatch => "filename mismatch",
            FindingKind::BadImageSize => "non-positive image size",
            FindingKind::DegenerateBox => "degenerate box",
            FindingKind::BoxOutOfBounds => "box out of bounds",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Finding {
    /// Path relative to the dataset root.
    pub path: PathBuf,
    pub kind: FindingKind,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.kind, self.path.display())?;
        if !self.detail.is_empty() {
            write!(f, "\t{}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    pub detector_gun: usize,
    pub detector_other: usize,
    pub classifier_gun: usize,
    pub classifier_other: usize,
}

impl CategoryCounts {
    pub fn get(&self, stage: Stage, category: Category) -> usize {
        match (stage, category) {
            (Stage::Detector, Category::Gun) => self.detector_gun,
            (Stage::Detector, Category::Other) => self.detector_other,
            (Stage::Classifier, Category::Gun) => self.classifier_gun,
            (Stage::Classifier, Category::Other) => self.classifier_other,
        }
    }

    fn bump(&mut self, stage: Stage, category: Category) {
        let slot = match (stage, category) {
            (Stage::Detector, Category::Gun) => &mut self.detector_gun,
            (Stage::Detector, Category::Other) => &mut self.detector_other,
            (Stage::Classifier, Category::Gun) => &mut self.classifier_gun,
            (Stage::Classifier, Category::Other) => &mut self.classifier_other,
        };
        *slot += 1;
    }

    pub fn total(&self) -> usize {
        self.detector_gun + self.detector_other + self.classifier_gun + self.classifier_other
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageEntry {
    /// Image path relative to the root, `/`-separated.
    pub path: PathBuf,
    pub stage: Stage,
    pub category: Category,
    /// Intermediate directories between the stage and category folders, e.g. `train`.
    pub split: Option<String>,
    pub annotation_path: Option<PathBuf>,
    /// Parsed leniently; geometry problems show up in [`validate`].
    pub annotation: Option<AnnotationRecord>,
}

impl ImageEntry {
    pub fn stem(&self) -> &str {
        self.path.file_stem().and_then(|s| s.to_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub counts: CategoryCounts,
    /// Sorted by path.
    pub entries: Vec<ImageEntry>,
    /// Problems noticed while walking: orphans, unreadable or malformed files.
    pub scan_findings: Vec<Finding>,
}

impl DatasetIndex {
    pub fn entries_in(&self, stage: Stage, category: Category) -> impl Iterator<Item = &ImageEntry> {
        self.entries.iter().filter(move |e| e.stage == stage && e.category == category)
    }

    /// Detector gun images that have a parsed annotation.
    pub fn annotated(&self) -> impl Iterator<Item = (&ImageEntry, &AnnotationRecord)> {
        self.entries_in(Stage::Detector, Category::Gun)
            .filter_map(|e| e.annotation.as_ref().map(|a| (e, a)))
    }

    pub fn gun_box_count(&self) -> usize {
        self.annotated().map(|(_, a)| a.gun_objects().count()).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset root {0} is not a directory")]
    MissingRoot(PathBuf),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("writing {path}: {source}")]
    Image {
        path: PathBuf,
        source: crate::imaging::ImagingError,
    },
    #[error("chip size must be positive")]
    ChipSize,
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("jpg" | "jpeg" | "png")
    )
}

fn is_xml(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("xml"))
}

struct Classified {
    stage: Stage,
    category: Category,
    split: Option<String>,
    /// Directory of the category folder, relative to root; pairing scope.
    group: PathBuf,
}

fn classify_path(rel: &Path) -> Option<Classified> {
    let parts: Vec<&str> = rel.iter().filter_map(|c| c.to_str()).collect();
    let stage = match parts.first()? {
        &"detector" => Stage::Detector,
        &"classifier" => Stage::Classifier,
        _ => return None,
    };
    // the category folder is the nearest gun/other directory below the stage
    let dirs = &parts[..parts.len() - 1];
    let pos = dirs.iter().skip(1).position(|p| *p == "gun" || *p == "other")? + 1;
    let category = if dirs[pos] == "gun" { Category::Gun } else { Category::Other };
    let split = (pos > 1).then(|| dirs[1..pos].join("/"));
    Some(Classified {
        stage,
        category,
        split,
        group: dirs[..=pos].iter().collect(),
    })
}

fn rel_path(root: &Path, path: &Path) -> PathBuf {
    // normalised to `/` separators so indexes compare equal across platforms
    path.strip_prefix(root)
        .unwrap_or(path)
        .iter()
        .filter_map(|c| c.to_str())
        .collect::<Vec<_>>()
        .join("/")
        .into()
}

/// Walks `root` and builds an index. Only a missing root is an error.
pub fn scan_dataset(root: &Path) -> Result<DatasetIndex, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingRoot(root.to_path_buf()));
    }
    let mut findings = Vec::new();
    let mut images: Vec<(PathBuf, Classified)> = Vec::new();
    let mut annotations: Vec<(PathBuf, PathBuf)> = Vec::new();

    for item in WalkDir::new(root).follow_links(true) {
        let item = match item {
            Ok(i) => i,
            Err(e) => {
                let path = e.path().map(|p| rel_path(root, p)).unwrap_or_default();
                findings.push(Finding {
                    path,
                    kind: FindingKind::UnreadableFile,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        if !item.file_type().is_file() {
            continue;
        }
        let rel = rel_path(root, item.path());
        let Some(c) = classify_path(&rel) else { continue };
        if is_image(&rel) {
            images.push((rel, c));
        } else if is_xml(&rel) && c.stage == Stage::Detector && c.category == Category::Gun {
            annotations.push((rel, c.group));
        }
    }
    images.sort_by(|a, b| a.0.cmp(&b.0));
    annotations.sort();

    let stem_of = |p: &Path| p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    let mut by_key: BTreeMap<(PathBuf, String), PathBuf> = BTreeMap::new();
    for (path, group) in &annotations {
        let key = (group.clone(), stem_of(path));
        if let Some(prev) = by_key.get(&key) {
            findings.push(Finding {
                path: path.clone(),
                kind: FindingKind::DuplicateStem,
                detail: format!("also {}", prev.display()),
            });
            continue;
        }
        by_key.insert(key, path.clone());
    }

    let parsed: Vec<(PathBuf, Result<AnnotationRecord, Finding>)> = by_key
        .values()
        .cloned()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|rel| {
            let result = std::fs::read(root.join(&rel))
                .map_err(|e| Finding {
                    path: rel.clone(),
                    kind: FindingKind::UnreadableFile,
                    detail: e.to_string(),
                })
                .and_then(|bytes| {
                    parse_annotation_lenient(&bytes).map_err(|e| Finding {
                        path: rel.clone(),
                        kind: FindingKind::MalformedAnnotation,
                        detail: e.to_string(),
                    })
                });
            (rel, result)
        })
        .collect();
    let mut records: BTreeMap<PathBuf, AnnotationRecord> = BTreeMap::new();
    for (rel, r) in parsed {
        match r {
            Ok(rec) => {
                records.insert(rel, rec);
            }
            Err(f) => findings.push(f),
        }
    }

    let mut counts = CategoryCounts::default();
    let mut entries = Vec::with_capacity(images.len());
    let mut used = std::collections::BTreeSet::new();
    let mut seen_stems = std::collections::BTreeSet::new();
    for (path, c) in images {
        counts.bump(c.stage, c.category);
        let mut entry = ImageEntry {
            path,
            stage: c.stage,
            category: c.category,
            split: c.split,
            annotation_path: None,
            annotation: None,
        };
        if c.stage == Stage::Detector && c.category == Category::Gun {
            let key = (c.group, stem_of(&entry.path));
            if !seen_stems.insert(key.clone()) {
                findings.push(Finding {
                    path: entry.path.clone(),
                    kind: FindingKind::DuplicateStem,
                    detail: String::new(),
                });
            } else if let Some(ann) = by_key.get(&key) {
                used.insert(ann.clone());
                entry.annotation = records.get(ann).cloned();
                entry.annotation_path = Some(ann.clone());
            } else {
                findings.push(Finding {
                    path: entry.path.clone(),
                    kind: FindingKind::OrphanImage,
                    detail: String::new(),
                });
            }
        }
        entries.push(entry);
    }
    for ann in by_key.values().filter(|a| !used.contains(*a)) {
        findings.push(Finding {
            path: ann.clone(),
            kind: FindingKind::OrphanAnnotation,
            detail: String::new(),
        });
    }
    findings.sort();

    Ok(DatasetIndex {
        root: root.to_path_buf(),
        counts,
        entries,
        scan_findings: findings,
    })
}

/// All findings for an index: those from the scan plus per-record geometry
/// and naming checks. Empty means clean.
pub fn validate(index: &DatasetIndex) -> Vec<Finding> {
    let mut out = index.scan_findings.clone();
    for (entry, rec) in index.annotated() {
        let ann_path = entry.annotation_path.clone().unwrap_or_default();
        let file_name = entry.path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if rec.filename != file_name {
            out.push(Finding {
                path: ann_path.clone(),
                kind: FindingKind::FilenameMismatch,
                detail: format!("annotation names {:?}, image is {:?}", rec.filename, file_name),
            });
        }
        let size = rec.frame_size();
        if size.is_none() {
            out.push(Finding {
                path: ann_path.clone(),
                kind: FindingKind::BadImageSize,
                detail: format!("{}x{}", rec.width, rec.height),
            });
        }
        for (k, o) in rec.objects.iter().enumerate() {
            let coords = format!("object {k}: {},{},{},{}", o.xmin, o.ymin, o.xmax, o.ymax);
            match o.bounding_box() {
                Err(_) => {
                    // a negative corner with positive extent is an out-of-bounds box, not a flat one
                    let kind = if o.xmin < o.xmax && o.ymin < o.ymax {
                        FindingKind::BoxOutOfBounds
                    } else {
                        FindingKind::DegenerateBox
                    };
                    out.push(Finding {
                        path: ann_path.clone(),
                        kind,
                        detail: coords,
                    });
                }
                Ok(b) => {
                    if size.is_some_and(|s| !b.fits_within(s)) {
                        out.push(Finding {
                            path: ann_path.clone(),
                            kind: FindingKind::BoxOutOfBounds,
                            detail: coords,
                        });
                    }
                }
            }
        }
    }
    out.sort();
    out
}
