//! Edge-to-cloud detection report envelope.
//!
//! A report is a compact UTF-8 JSON object with keys in byte order and no
//! insignificant whitespace. Image payloads are standard base64 with
//! padding. Version 1 fields:
//!
//! | key               | type                                   |
//! |-------------------|----------------------------------------|
//! | `box`             | object `x_max`, `x_min`, `y_max`, `y_min` (integers) |
//! | `chip_jpeg`       | base64 string, non-empty JPEG          |
//! | `detector_score`  | number in `[0, 1]`                     |
//! | `device_id`       | non-empty string                       |
//! | `extra_snapshots` | optional array of base64 JPEG strings, omitted when empty |
//! | `protocol_version`| integer, always `1`                    |
//! | `snapshot_jpeg`   | base64 string, non-empty JPEG          |
//! | `timestamp_ms`    | integer, UTC epoch milliseconds        |
//! | `track_id`        | non-negative integer                   |
//!
//! Unknown keys are rejected.

pub mod uplink;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use gds_core::{BoundingBox, GunEvent};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::imaging::{self, looks_like_jpeg, ImagingError};

pub const PROTOCOL_VERSION: u64 = 1;

const FIELDS: [&str; 9] = [
    "box",
    "chip_jpeg",
    "detector_score",
    "device_id",
    "extra_snapshots",
    "protocol_version",
    "snapshot_jpeg",
    "timestamp_ms",
    "track_id",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("unsupported protocol version {0}")]
    Version(u64),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("invalid field {field:?}: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("payload error: {0}")]
    Payload(String),
}

#[derive(Debug, thiserror::Error)]
pub enum EncodeError {
    #[error("jpeg encoding failed: {0}")]
    Jpeg(#[from] ImagingError),
}

/// (device_id, track_id, timestamp_ms): the server keeps one report per key.
pub type DedupKey = (String, u64, i64);

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub device_id: String,
    pub timestamp_ms: i64,
    pub track_id: u64,
    pub bbox: BoundingBox,
    pub detector_score: f64,
    pub chip_jpeg: Vec<u8>,
    pub snapshot_jpeg: Vec<u8>,
    pub extra_snapshots: Vec<Vec<u8>>,
}

impl DetectionReport {
    pub fn from_event(event: &GunEvent) -> Result<Self, EncodeError> {
        Ok(Self {
            device_id: event.device_id.clone(),
            timestamp_ms: event.timestamp_ms,
            track_id: event.track_id,
            bbox: event.bbox,
            detector_score: event.detector_score,
            chip_jpeg: imaging::encode_jpeg(&event.chip)?,
            snapshot_jpeg: imaging::encode_jpeg(&event.snapshot)?,
            extra_snapshots: Vec::new(),
        })
    }

    pub fn dedup_key(&self) -> DedupKey {
        (self.device_id.clone(), self.track_id, self.timestamp_ms)
    }

    /// Canonical bytes. Equal reports always encode to equal bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut bbox = Map::new();
        bbox.insert("x_min".into(), self.bbox.x_min().into());
        bbox.insert("y_min".into(), self.bbox.y_min().into());
        bbox.insert("x_max".into(), self.bbox.x_max().into());
        bbox.insert("y_max".into(), self.bbox.y_max().into());

        // serde_json's default map is ordered by key, which fixes the layout
        let mut m = Map::new();
        m.insert("protocol_version".into(), PROTOCOL_VERSION.into());
        m.insert("device_id".into(), self.device_id.clone().into());
        m.insert("timestamp_ms".into(), self.timestamp_ms.into());
        m.insert("track_id".into(), self.track_id.into());
        m.insert("box".into(), Value::Object(bbox));
        m.insert("detector_score".into(), canonical_score(self.detector_score));
        m.insert("chip_jpeg".into(), STANDARD.encode(&self.chip_jpeg).into());
        m.insert("snapshot_jpeg".into(), STANDARD.encode(&self.snapshot_jpeg).into());
        if !self.extra_snapshots.is_empty() {
            let list = self.extra_snapshots.iter().map(|s| Value::from(STANDARD.encode(s))).collect();
            m.insert("extra_snapshots".into(), Value::Array(list));
        }
        serde_json::to_vec(&Value::Object(m)).expect("values are always serialisable")
    }
}

fn canonical_score(s: f64) -> Value {
    // -0.0 and 0.0 compare equal, so they must encode the same
    let s = if s == 0.0 { 0.0 } else { s };
    serde_json::Number::from_f64(s).map(Value::Number).unwrap_or(Value::Null)
}

/// Packages a pipeline event (JPEG-encoding its images) and encodes it.
pub fn encode_event(event: &GunEvent) -> Result<Vec<u8>, EncodeError> {
    Ok(DetectionReport::from_event(event)?.encode())
}

fn invalid(field: &str, reason: impl Into<String>) -> DecodeError {
    DecodeError::InvalidField {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn take<'a>(m: &'a Map<String, Value>, field: &'static str) -> Result<&'a Value, DecodeError> {
    m.get(field).ok_or(DecodeError::MissingField(field))
}

fn take_u64(m: &Map<String, Value>, field: &'static str) -> Result<u64, DecodeError> {
    take(m, field)?.as_u64().ok_or_else(|| invalid(field, "expected a non-negative integer"))
}

fn take_jpeg(field: &str, v: &Value) -> Result<Vec<u8>, DecodeError> {
    let s = v.as_str().ok_or_else(|| invalid(field, "expected a base64 string"))?;
    let bytes = STANDARD
        .decode(s)
        .map_err(|e| DecodeError::Payload(format!("{field}: corrupt base64: {e}")))?;
    if bytes.is_empty() {
        return Err(invalid(field, "empty image"));
    }
    if !looks_like_jpeg(&bytes) {
        return Err(DecodeError::Payload(format!("{field}: not a JPEG stream")));
    }
    Ok(bytes)
}

/// Parses and validates an envelope. Nothing is returned on any error.
pub fn decode_report(bytes: &[u8]) -> Result<DetectionReport, DecodeError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| DecodeError::Payload(e.to_string()))?;
    let Value::Object(m) = value else {
        return Err(DecodeError::Payload("envelope is not a JSON object".into()));
    };
    let version = take_u64(&m, "protocol_version")?;
    if version != PROTOCOL_VERSION {
        return Err(DecodeError::Version(version));
    }
    if let Some(k) = m.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(invalid(k, "unknown field"));
    }

    let device_id = take(&m, "device_id")?
        .as_str()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| invalid("device_id", "expected a non-empty string"))?
        .to_string();
    let timestamp_ms = take(&m, "timestamp_ms")?
        .as_i64()
        .ok_or_else(|| invalid("timestamp_ms", "expected an integer"))?;
    let track_id = take_u64(&m, "track_id")?;

    let Value::Object(b) = take(&m, "box")? else {
        return Err(invalid("box", "expected an object"));
    };
    if let Some(k) = b.keys().find(|k| !["x_min", "y_min", "x_max", "y_max"].contains(&k.as_str())) {
        return Err(invalid("box", format!("unknown key {k:?}")));
    }
    let coord = |k: &'static str| -> Result<i64, DecodeError> {
        b.get(k)
            .ok_or(DecodeError::MissingField(k))?
            .as_i64()
            .ok_or_else(|| invalid("box", format!("{k} is not an integer")))
    };
    let bbox = BoundingBox::from_signed(coord("x_min")?, coord("y_min")?, coord("x_max")?, coord("y_max")?)
        .map_err(|e| invalid("box", e.to_string()))?;

    let detector_score = take(&m, "detector_score")?
        .as_f64()
        .filter(|s| (0.0..=1.0).contains(s))
        .ok_or_else(|| invalid("detector_score", "expected a number in [0, 1]"))?;

    let chip_jpeg = take_jpeg("chip_jpeg", take(&m, "chip_jpeg")?)?;
    let snapshot_jpeg = take_jpeg("snapshot_jpeg", take(&m, "snapshot_jpeg")?)?;
    let extra_snapshots = match m.get("extra_snapshots") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| take_jpeg("extra_snapshots", v))
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(invalid("extra_snapshots", "expected an array")),
    };

    Ok(DetectionReport {
        device_id,
        timestamp_ms,
        track_id,
        bbox,
        detector_score,
        chip_jpeg,
        snapshot_jpeg,
        extra_snapshots,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "disposition", rename_all = "snake_case")]
pub enum AckDisposition {
    Accepted,
    Duplicate,
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestAck {
    pub report_id: String,
    #[serde(flatten)]
    pub disposition: AckDisposition,
}
