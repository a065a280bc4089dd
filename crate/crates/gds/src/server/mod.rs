//! Cloud side: report ingest with second-stage classification, alert
//! persistence and review, device tracking, notification dispatch and the
//! HTTP API over all of it.

pub mod config;
pub mod http;
pub mod notify;
pub mod store;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use gds_core::{BoundingBox, Classifier, FrameSize};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::imaging;
use crate::proto::{decode_report, AckDisposition, DetectionReport, IngestAck};
pub use notify::{DeliveryRecord, Notifier, WebhookNotifier};
pub use store::{AlertStore, FileStore, StoreError};

/// A device counts as online for this long after it was last heard from.
pub const ONLINE_WINDOW_MS: i64 = 90_000;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> i64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    }
}

/// Settable clock for tests and simulations.
#[derive(Clone, Default)]
pub struct ManualClock(Arc<AtomicI64>);

impl ManualClock {
    pub fn new(ms: i64) -> Self {
        Self(Arc::new(AtomicI64::new(ms)))
    }

    pub fn set(&self, ms: i64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: i64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> i64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxJson {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl From<BoundingBox> for BoxJson {
    fn from(b: BoundingBox) -> Self {
        Self {
            x_min: b.x_min(),
            y_min: b.y_min(),
            x_max: b.x_max(),
            y_max: b.y_max(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Confirmed,
    Suppressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Review {
    Unreviewed,
    Acknowledged,
    FalsePositive,
}

impl std::str::FromStr for Disposition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "confirmed" => Ok(Self::Confirmed),
            "suppressed" => Ok(Self::Suppressed),
            _ => Err(format!("unknown disposition {s:?}")),
        }
    }
}

impl std::str::FromStr for Review {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "unreviewed" => Ok(Self::Unreviewed),
            "acknowledged" => Ok(Self::Acknowledged),
            "false_positive" => Ok(Self::FalsePositive),
            _ => Err(format!("unknown review state {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub dispatched_at_ms: i64,
    pub deliveries: Vec<DeliveryRecord>,
    /// Set when at least one webhook is configured and none accepted the call.
    pub undelivered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub report_id: String,
    pub device_id: String,
    pub received_at_ms: i64,
    pub timestamp_ms: i64,
    pub track_id: u64,
    #[serde(rename = "box")]
    pub bbox: BoxJson,
    pub detector_score: f64,
    pub second_stage_score: f64,
    pub disposition: Disposition,
    pub review: Review,
    pub reviewer: Option<String>,
    pub reviewed_at_ms: Option<i64>,
    pub snapshot_width: u32,
    pub snapshot_height: u32,
    pub notification: Option<Notification>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_id: String,
    pub display_name: String,
    pub last_seen_ms: i64,
    pub reports: u64,
    pub confirmed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeviceStatus {
    #[serde(flatten)]
    pub record: DeviceRecord,
    pub online: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub report_id: String,
    pub verdict: Review,
    pub reviewer: String,
    pub at_ms: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlertFilter {
    pub device_id: Option<String>,
    pub disposition: Option<Disposition>,
    pub review: Option<Review>,
    /// Inclusive bounds on the event timestamp.
    pub since_ms: Option<i64>,
    pub until_ms: Option<i64>,
}

impl AlertFilter {
    pub fn matches(&self, a: &Alert) -> bool {
        self.device_id.as_ref().is_none_or(|d| *d == a.device_id)
            && self.disposition.is_none_or(|d| d == a.disposition)
            && self.review.is_none_or(|r| r == a.review)
            && self.since_ms.is_none_or(|s| a.timestamp_ms >= s)
            && self.until_ms.is_none_or(|u| a.timestamp_ms <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlertPage {
    pub alerts: Vec<Alert>,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
    pub pages: usize,
}

pub const MAX_PER_PAGE: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("alert {0} not found")]
    NotFound(String),
    #[error("alert {report_id} already reviewed as {current:?}")]
    Conflict { report_id: String, current: Review, reviewer: Option<String> },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("second-stage classifier failed: {0}")]
    Classifier(String),
    #[error("export failed after writing {} file(s): {source}", written.len())]
    Export { written: Vec<PathBuf>, source: std::io::Error },
}

#[derive(Debug, Clone, Serialize)]
pub struct ServiceStats {
    pub alerts: usize,
    pub confirmed: usize,
    pub suppressed: usize,
    pub false_positives: usize,
    pub undelivered: usize,
}

/// Stable id derived from the dedup key, so every retry of a report maps to
/// the same record.
pub fn report_id(device_id: &str, track_id: u64, timestamp_ms: i64) -> String {
    let mut h = Sha256::new();
    h.update(device_id.as_bytes());
    h.update([0]);
    h.update(track_id.to_be_bytes());
    h.update(timestamp_ms.to_be_bytes());
    hex::encode(&h.finalize()[..16])
}

pub struct ServiceOptions {
    pub classifier_threshold: f64,
    /// Size of exported hard-negative chips.
    pub chip_size: u32,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            classifier_threshold: 0.5,
            chip_size: 112,
        }
    }
}

pub type SharedClassifier = Box<dyn Classifier + Send>;

pub struct Service {
    store: Arc<dyn AlertStore>,
    classifier: Mutex<SharedClassifier>,
    notifier: Arc<dyn Notifier>,
    clock: Arc<dyn Clock>,
    opts: ServiceOptions,
    /// Serialises check-then-write sequences (dedup, review, device upsert).
    write_lock: Mutex<()>,
    dispatches: Mutex<Vec<JoinHandle<()>>>,
}

impl Service {
    pub fn new(
        store: Arc<dyn AlertStore>,
        classifier: SharedClassifier,
        notifier: Arc<dyn Notifier>,
        clock: Arc<dyn Clock>,
        opts: ServiceOptions,
    ) -> Self {
        Self {
            store,
            classifier: Mutex::new(classifier),
            notifier,
            clock,
            opts,
            write_lock: Mutex::new(()),
            dispatches: Mutex::new(Vec::new()),
        }
    }

    pub fn store(&self) -> &Arc<dyn AlertStore> {
        &self.store
    }

    pub fn now_ms(&self) -> i64 {
        self.clock.now_ms()
    }

    /// Decodes and ingests an envelope. Schema problems yield a rejected
    /// ack; storage or classifier failures are errors so the sender retries.
    pub fn ingest_bytes(self: &Arc<Self>, bytes: &[u8]) -> Result<IngestAck, ServiceError> {
        match decode_report(bytes) {
            Ok(r) => self.ingest(&r),
            Err(e) => Ok(IngestAck {
                report_id: String::new(),
                disposition: AckDisposition::Rejected { reason: e.to_string() },
            }),
        }
    }

    pub fn ingest(self: &Arc<Self>, report: &DetectionReport) -> Result<IngestAck, ServiceError> {
        let id = report_id(&report.device_id, report.track_id, report.timestamp_ms);
        let rejected = |reason: String| IngestAck {
            report_id: id.clone(),
            disposition: AckDisposition::Rejected { reason },
        };
        let chip = match imaging::decode(&report.chip_jpeg) {
            Ok(c) => c,
            Err(e) => return Ok(rejected(format!("chip_jpeg: {e}"))),
        };
        let snapshot = match imaging::decode(&report.snapshot_jpeg) {
            Ok(s) => s.size(),
            Err(e) => return Ok(rejected(format!("snapshot_jpeg: {e}"))),
        };
        if !report.bbox.fits_within(snapshot) {
            return Ok(rejected(format!("box {} outside snapshot {snapshot}", report.bbox)));
        }

        let _guard = self.write_lock.lock().unwrap();
        if self.store.get(&id).is_some() {
            return Ok(IngestAck {
                report_id: id,
                disposition: AckDisposition::Duplicate,
            });
        }
        let score = self
            .classifier
            .lock()
            .unwrap()
            .classify(&chip)
            .map_err(|e| ServiceError::Classifier(e.to_string()))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(ServiceError::Classifier(format!("score {score} outside [0, 1]")));
        }
        let disposition = if score >= self.opts.classifier_threshold {
            Disposition::Confirmed
        } else {
            Disposition::Suppressed
        };
        let now = self.clock.now_ms();
        let alert = Alert {
            report_id: id.clone(),
            device_id: report.device_id.clone(),
            received_at_ms: now,
            timestamp_ms: report.timestamp_ms,
            track_id: report.track_id,
            bbox: report.bbox.into(),
            detector_score: report.detector_score,
            second_stage_score: score,
            disposition,
            review: Review::Unreviewed,
            reviewer: None,
            reviewed_at_ms: None,
            snapshot_width: snapshot.width(),
            snapshot_height: snapshot.height(),
            notification: None,
        };
        self.store.insert(&alert, &report.chip_jpeg, &report.snapshot_jpeg)?;
        self.touch_device(&report.device_id, None, now, Some(disposition))?;
        drop(_guard);

        if disposition == Disposition::Confirmed {
            self.spawn_dispatch(alert);
        }
        Ok(IngestAck {
            report_id: id,
            disposition: AckDisposition::Accepted,
        })
    }

    fn spawn_dispatch(self: &Arc<Self>, alert: Alert) {
        let svc = self.clone();
        let handle = std::thread::spawn(move || {
            let deliveries = svc.notifier.dispatch(&alert);
            let undelivered = !deliveries.is_empty() && deliveries.iter().all(|d| !d.delivered);
            if undelivered {
                tracing::warn!(report_id = %alert.report_id, "alert undelivered to every webhook");
            }
            let _guard = svc.write_lock.lock().unwrap();
            if let Some(mut current) = svc.store.get(&alert.report_id) {
                current.notification = Some(Notification {
                    dispatched_at_ms: svc.clock.now_ms(),
                    deliveries,
                    undelivered,
                });
                if let Err(e) = svc.store.update(&current) {
                    tracing::error!(error = %e, "could not record delivery result");
                }
            }
        });
        let mut pending = self.dispatches.lock().unwrap();
        pending.retain(|h| !h.is_finished());
        pending.push(handle);
    }

    /// Blocks until every notification dispatched so far has finished.
    pub fn wait_idle(&self) {
        let handles: Vec<_> = std::mem::take(&mut *self.dispatches.lock().unwrap());
        for h in handles {
            let _ = h.join();
        }
    }

    pub fn get_alert(&self, id: &str) -> Result<Alert, ServiceError> {
        self.store.get(id).ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    /// Newest first by receive time, ties by report id; `page` is 1-based.
    pub fn list_alerts(&self, filter: &AlertFilter, page: usize, per_page: usize) -> Result<AlertPage, ServiceError> {
        if page == 0 {
            return Err(ServiceError::Validation("page starts at 1".into()));
        }
        if per_page == 0 || per_page > MAX_PER_PAGE {
            return Err(ServiceError::Validation(format!("per_page must be in 1..={MAX_PER_PAGE}")));
        }
        if let (Some(s), Some(u)) = (filter.since_ms, filter.until_ms) {
            if s > u {
                return Err(ServiceError::Validation("since is after until".into()));
            }
        }
        let mut all: Vec<Alert> = self.store.alerts().into_iter().filter(|a| filter.matches(a)).collect();
        all.sort_by(|a, b| b.received_at_ms.cmp(&a.received_at_ms).then_with(|| a.report_id.cmp(&b.report_id)));
        let total = all.len();
        let alerts = all.into_iter().skip((page - 1).saturating_mul(per_page)).take(per_page).collect();
        Ok(AlertPage {
            alerts,
            page,
            per_page,
            total,
            pages: total.div_ceil(per_page),
        })
    }

    pub fn review_alert(&self, id: &str, verdict: Review, reviewer: &str) -> Result<Alert, ServiceError> {
        if verdict == Review::Unreviewed {
            return Err(ServiceError::Validation("verdict must be acknowledged or false_positive".into()));
        }
        let reviewer = reviewer.trim();
        if reviewer.is_empty() {
            return Err(ServiceError::Validation("reviewer is required".into()));
        }
        let _guard = self.write_lock.lock().unwrap();
        let mut alert = self.get_alert(id)?;
        if alert.review != Review::Unreviewed {
            return Err(ServiceError::Conflict {
                report_id: id.to_string(),
                current: alert.review,
                reviewer: alert.reviewer,
            });
        }
        let now = self.clock.now_ms();
        alert.review = verdict;
        alert.reviewer = Some(reviewer.to_string());
        alert.reviewed_at_ms = Some(now);
        self.store.update(&alert)?;
        self.store.append_audit(&AuditEntry {
            report_id: id.to_string(),
            verdict,
            reviewer: reviewer.to_string(),
            at_ms: now,
        })?;
        Ok(alert)
    }

    pub fn heartbeat(&self, device_id: &str, display_name: Option<&str>) -> Result<DeviceStatus, ServiceError> {
        if device_id.trim().is_empty() {
            return Err(ServiceError::Validation("device id is required".into()));
        }
        let _guard = self.write_lock.lock().unwrap();
        let now = self.clock.now_ms();
        let record = self.touch_device(device_id, display_name, now, None)?;
        Ok(DeviceStatus {
            online: true,
            record,
        })
    }

    fn touch_device(
        &self,
        device_id: &str,
        display_name: Option<&str>,
        now: i64,
        report: Option<Disposition>,
    ) -> Result<DeviceRecord, ServiceError> {
        let mut d = self
            .store
            .devices()
            .into_iter()
            .find(|d| d.device_id == device_id)
            .unwrap_or_else(|| DeviceRecord {
                device_id: device_id.to_string(),
                display_name: device_id.to_string(),
                last_seen_ms: now,
                reports: 0,
                confirmed: 0,
            });
        d.last_seen_ms = d.last_seen_ms.max(now);
        if let Some(name) = display_name.filter(|n| !n.trim().is_empty()) {
            d.display_name = name.to_string();
        }
        if let Some(disp) = report {
            d.reports += 1;
            d.confirmed += u64::from(disp == Disposition::Confirmed);
        }
        self.store.put_device(&d)?;
        Ok(d)
    }

    pub fn list_devices(&self) -> Vec<DeviceStatus> {
        let now = self.clock.now_ms();
        self.store
            .devices()
            .into_iter()
            .map(|record| DeviceStatus {
                online: now - record.last_seen_ms <= ONLINE_WINDOW_MS,
                record,
            })
            .collect()
    }

    pub fn stats(&self) -> ServiceStats {
        let all = self.store.alerts();
        let count = |f: &dyn Fn(&Alert) -> bool| all.iter().filter(|a| f(a)).count();
        ServiceStats {
            alerts: all.len(),
            confirmed: count(&|a| a.disposition == Disposition::Confirmed),
            suppressed: count(&|a| a.disposition == Disposition::Suppressed),
            false_positives: count(&|a| a.review == Review::FalsePositive),
            undelivered: count(&|a| a.notification.as_ref().is_some_and(|n| n.undelivered)),
        }
    }

    /// Writes every chip labelled false positive to
    /// `out/classifier/other/<report_id>.jpg` at the configured chip size.
    pub fn export_hard_negatives(&self, out: &Path) -> Result<Vec<PathBuf>, ServiceError> {
        let dir = out.join("classifier").join("other");
        let mut written = Vec::new();
        let fail = |written: &Vec<PathBuf>, source: std::io::Error| ServiceError::Export {
            written: written.clone(),
            source,
        };
        std::fs::create_dir_all(&dir).map_err(|e| fail(&written, e))?;
        let mut ids: Vec<String> = self
            .store
            .alerts()
            .into_iter()
            .filter(|a| a.review == Review::FalsePositive)
            .map(|a| a.report_id)
            .collect();
        ids.sort();
        let size = FrameSize::new(self.opts.chip_size, self.opts.chip_size).expect("chip size positive");
        for id in ids {
            let bytes = self
                .store
                .chip(&id)?
                .ok_or_else(|| fail(&written, std::io::Error::other(format!("chip blob missing for {id}"))))?;
            let chip = imaging::decode(&bytes).map_err(|e| fail(&written, std::io::Error::other(e.to_string())))?;
            let chip = if chip.size() == size { chip } else { gds_core::image::resize(&chip, size) };
            let path = dir.join(format!("{id}.jpg"));
            imaging::save_jpeg(&chip, &path).map_err(|e| fail(&written, std::io::Error::other(e.to_string())))?;
            written.push(path);
        }
        Ok(written)
    }
}
