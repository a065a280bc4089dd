//! Report delivery from the edge: retrying POST and the background sink
//! that feeds it from the pipeline.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use gds_core::{EventSink, GunEvent, SinkError};

use super::{encode_event, AckDisposition, IngestAck};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: u32,
    pub cap: Duration,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2,
            cap: Duration::from_secs(60),
            max_attempts: 8,
        }
    }
}

impl RetryPolicy {
    /// Wait after the `failures`-th consecutive failure (1-based).
    pub fn backoff(&self, failures: u32) -> Duration {
        let mult = self.factor.checked_pow(failures.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base.checked_mul(mult).unwrap_or(self.cap).min(self.cap)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
}

/// One POST of an encoded report. `Err` means no response was received.
pub trait Transport {
    fn post(&mut self, body: &[u8]) -> Result<Response, String>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn post(&mut self, body: &[u8]) -> Result<Response, String> {
        (**self).post(body)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn post(&mut self, body: &[u8]) -> Result<Response, String> {
        (**self).post(body)
    }
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
}

impl HttpTransport {
    /// `url` is the full ingest endpoint, e.g. `http://host:8080/api/v1/reports`.
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, reqwest::Error> {
        Ok(Self {
            client: reqwest::blocking::Client::builder().timeout(timeout).build()?,
            url: url.into(),
            token,
        })
    }
}

impl Transport for HttpTransport {
    fn post(&mut self, body: &[u8]) -> Result<Response, String> {
        let mut req = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(|e| e.to_string())?.to_vec();
        Ok(Response { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub ack: IngestAck,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UplinkError {
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("server refused report with status {status}: {body}")]
    Refused { status: u16, body: String },
}

fn retryable(status: u16) -> bool {
    status >= 500 || status == 408 || status == 429
}

/// POSTs `body` until the server answers, retrying transport failures and
/// 5xx responses with exponential backoff. A rejected ack is a successful
/// delivery: the server understood the report and refused it for good.
pub fn uplink_send<T: Transport + ?Sized>(
    body: &[u8],
    transport: &mut T,
    policy: &RetryPolicy,
    sleep: &mut dyn FnMut(Duration),
) -> Result<Delivery, UplinkError> {
    let max = policy.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=max {
        match transport.post(body) {
            Err(e) => last = e,
            Ok(r) if (200..300).contains(&r.status) => match serde_json::from_slice::<IngestAck>(&r.body) {
                Ok(ack) => return Ok(Delivery { ack, attempts: attempt }),
                Err(e) => last = format!("unreadable ack: {e}"),
            },
            Ok(r) if retryable(r.status) => last = format!("status {}", r.status),
            Ok(r) => {
                return match serde_json::from_slice::<IngestAck>(&r.body) {
                    Ok(ack) => Ok(Delivery { ack, attempts: attempt }),
                    Err(_) => Err(UplinkError::Refused {
                        status: r.status,
                        body: String::from_utf8_lossy(&r.body).into_owned(),
                    }),
                };
            }
        }
        if attempt < max {
            sleep(policy.backoff(attempt));
        }
    }
    Err(UplinkError::Exhausted { attempts: max, last })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UplinkStats {
    pub acks: Vec<IngestAck>,
    pub attempts: u64,
    /// Retry rounds that ran out and were started again.
    pub requeued: u64,
    pub refused: u64,
    /// Encoded reports still undelivered when the sink shut down.
    pub undelivered: Vec<Vec<u8>>,
}

impl UplinkStats {
    pub fn count(&self, pred: impl Fn(&AckDisposition) -> bool) -> usize {
        self.acks.iter().filter(|a| pred(&a.disposition)).count()
    }
}

pub type Sleeper = Box<dyn FnMut(Duration) + Send>;

/// Pipeline sink that hands encoded reports to a single background sender,
/// so at most one request is in flight and reports leave in order. When the
/// hand-off queue is full, `deliver` fails and the pipeline keeps the event
/// for a later frame.
pub struct UplinkSink {
    tx: Option<SyncSender<Vec<u8>>>,
    closing: Arc<AtomicBool>,
    worker: Option<JoinHandle<UplinkStats>>,
}

impl UplinkSink {
    pub fn spawn<T>(transport: T, policy: RetryPolicy, capacity: usize, sleeper: Sleeper) -> Self
    where
        T: Transport + Send + 'static,
    {
        let (tx, rx) = sync_channel(capacity.max(1));
        let closing = Arc::new(AtomicBool::new(false));
        let flag = closing.clone();
        let worker = std::thread::Builder::new()
            .name("uplink".into())
            .spawn(move || worker_loop(rx, transport, policy, sleeper, flag))
            .expect("spawn uplink thread");
        Self {
            tx: Some(tx),
            closing,
            worker: Some(worker),
        }
    }

    /// Stops accepting events, drains what is queued (one final retry round
    /// per report) and returns the delivery record.
    pub fn shutdown(mut self) -> UplinkStats {
        self.close()
    }

    fn close(&mut self) -> UplinkStats {
        self.closing.store(true, Ordering::SeqCst);
        self.tx.take();
        self.worker
            .take()
            .map(|h| h.join().expect("uplink thread panicked"))
            .unwrap_or_default()
    }
}

impl Drop for UplinkSink {
    fn drop(&mut self) {
        if self.worker.is_some() {
            self.close();
        }
    }
}

fn worker_loop<T: Transport>(
    rx: Receiver<Vec<u8>>,
    mut transport: T,
    policy: RetryPolicy,
    mut sleeper: Sleeper,
    closing: Arc<AtomicBool>,
) -> UplinkStats {
    let mut stats = UplinkStats::default();
    let mut counting = |d: Duration| sleeper(d);
    while let Ok(body) = rx.recv() {
        loop {
            let mut attempts = 0u32;
            let mut t = CountingTransport {
                inner: &mut transport,
                calls: &mut attempts,
            };
            let result = uplink_send(&body, &mut t, &policy, &mut counting);
            stats.attempts += u64::from(attempts);
            match result {
                Ok(d) => {
                    tracing::debug!(report_id = %d.ack.report_id, attempts = d.attempts, "report delivered");
                    stats.acks.push(d.ack);
                    break;
                }
                Err(UplinkError::Refused { status, body: text }) => {
                    tracing::warn!(status, %text, "report refused");
                    stats.refused += 1;
                    break;
                }
                Err(e @ UplinkError::Exhausted { .. }) => {
                    if closing.load(Ordering::SeqCst) {
                        tracing::warn!(error = %e, "report undelivered at shutdown");
                        stats.undelivered.push(body);
                        break;
                    }
                    tracing::warn!(error = %e, "retries exhausted, re-queueing report");
                    stats.requeued += 1;
                }
            }
        }
    }
    stats
}

struct CountingTransport<'a, T> {
    inner: &'a mut T,
    calls: &'a mut u32,
}

impl<T: Transport> Transport for CountingTransport<'_, T> {
    fn post(&mut self, body: &[u8]) -> Result<Response, String> {
        *self.calls += 1;
        self.inner.post(body)
    }
}

impl EventSink for UplinkSink {
    fn deliver(&mut self, event: &GunEvent) -> Result<(), SinkError> {
        let tx = self.tx.as_ref().ok_or_else(|| SinkError("uplink closed".into()))?;
        let bytes = encode_event(event).map_err(|e| SinkError(e.to_string()))?;
        tx.try_send(bytes).map_err(|e| match e {
            TrySendError::Full(_) => SinkError("uplink queue full".into()),
            TrySendError::Disconnected(_) => SinkError("uplink stopped".into()),
        })
    }
}

/// Writes each report to `<dir>/<device>_<track>_<timestamp>.json`.
pub struct DirectorySink {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl DirectorySink {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, written: Vec::new() })
    }
}

impl EventSink for DirectorySink {
    fn deliver(&mut self, event: &GunEvent) -> Result<(), SinkError> {
        let bytes = encode_event(event).map_err(|e| SinkError(e.to_string()))?;
        let safe: String = event
            .device_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let path = self
            .dir
            .join(format!("{safe}_{:06}_{}.json", event.track_id, event.timestamp_ms));
        std::fs::write(&path, bytes).map_err(|e| SinkError(e.to_string()))?;
        self.written.push(path);
        Ok(())
    }
}
