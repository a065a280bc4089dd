use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::Alert;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub url: String,
    pub attempts: u32,
    pub delivered: bool,
    pub last_status: Option<u16>,
    pub last_error: Option<String>,
}

/// Delivers a confirmed alert. Called off the request path.
pub trait Notifier: Send + Sync {
    fn dispatch(&self, alert: &Alert) -> Vec<DeliveryRecord>;
}

/// Does nothing; used when no webhooks are configured.
pub struct NoNotifier;

impl Notifier for NoNotifier {
    fn dispatch(&self, _: &Alert) -> Vec<DeliveryRecord> {
        Vec::new()
    }
}

/// Summary sent to webhooks: alert metadata and links, never image bytes.
pub fn alert_summary(alert: &Alert, base_url: &str) -> serde_json::Value {
    let base = base_url.trim_end_matches('/');
    let id = &alert.report_id;
    json!({
        "event": "gun_alert",
        "report_id": id,
        "device_id": alert.device_id,
        "timestamp_ms": alert.timestamp_ms,
        "track_id": alert.track_id,
        "box": alert.bbox,
        "detector_score": alert.detector_score,
        "second_stage_score": alert.second_stage_score,
        "links": {
            "alert": format!("{base}/api/v1/alerts/{id}"),
            "snapshot": format!("{base}/api/v1/alerts/{id}/snapshot"),
            "chip": format!("{base}/api/v1/alerts/{id}/chip"),
        },
    })
}

pub struct WebhookNotifier {
    urls: Vec<String>,
    base_url: String,
    attempts: u32,
    retry_delay: Duration,
    client: reqwest::blocking::Client,
}

impl WebhookNotifier {
    pub const ATTEMPTS: u32 = 3;

    pub fn new(urls: Vec<String>, base_url: impl Into<String>, retry_delay: Duration) -> Result<Self, reqwest::Error> {
        Ok(Self {
            urls,
            base_url: base_url.into(),
            attempts: Self::ATTEMPTS,
            retry_delay,
            client: reqwest::blocking::Client::builder().timeout(Duration::from_secs(10)).build()?,
        })
    }
}

impl Notifier for WebhookNotifier {
    fn dispatch(&self, alert: &Alert) -> Vec<DeliveryRecord> {
        let body = alert_summary(alert, &self.base_url);
        self.urls
            .iter()
            .map(|url| {
                let mut rec = DeliveryRecord {
                    url: url.clone(),
                    attempts: 0,
                    delivered: false,
                    last_status: None,
                    last_error: None,
                };
                while rec.attempts < self.attempts && !rec.delivered {
                    if rec.attempts > 0 {
                        std::thread::sleep(self.retry_delay);
                    }
                    rec.attempts += 1;
                    match self.client.post(url).json(&body).send() {
                        Ok(r) => {
                            rec.last_status = Some(r.status().as_u16());
                            rec.delivered = r.status().is_success();
                            rec.last_error = None;
                        }
                        Err(e) => rec.last_error = Some(e.to_string()),
                    }
                }
                rec
            })
            .collect()
    }
}
