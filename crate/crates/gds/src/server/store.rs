//! Persistence behind [`AlertStore`]. [`FileStore`] keeps everything under
//! one directory:
//!
//! ```text
//! alerts/<report_id>.json
//! blobs/<report_id>/chip.jpg
//! blobs/<report_id>/snapshot.jpg
//! devices.json
//! audit.jsonl
//! ```

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use super::{Alert, AuditEntry, DeviceRecord};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage io at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt record {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
}

pub trait AlertStore: Send + Sync {
    /// Persists blobs and the alert record. The record is written last, so a
    /// crash never leaves an alert without its images.
    fn insert(&self, alert: &Alert, chip: &[u8], snapshot: &[u8]) -> Result<(), StoreError>;
    fn update(&self, alert: &Alert) -> Result<(), StoreError>;
    fn get(&self, report_id: &str) -> Option<Alert>;
    /// Consistent snapshot of every alert.
    fn alerts(&self) -> Vec<Alert>;
    fn chip(&self, report_id: &str) -> Result<Option<Vec<u8>>, StoreError>;
    fn snapshot(&self, report_id: &str) -> Result<Option<Vec<u8>>, StoreError>;
    fn put_device(&self, device: &DeviceRecord) -> Result<(), StoreError>;
    fn devices(&self) -> Vec<DeviceRecord>;
    fn append_audit(&self, entry: &AuditEntry) -> Result<(), StoreError>;
    fn audit(&self) -> Vec<AuditEntry>;
}

#[derive(Default)]
struct Cache {
    alerts: BTreeMap<String, Alert>,
    devices: BTreeMap<String, DeviceRecord>,
    audit: Vec<AuditEntry>,
}

pub struct FileStore {
    root: PathBuf,
    cache: RwLock<Cache>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write-then-rename so readers never observe half a file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| StoreError::Corrupt {
        path: path.to_path_buf(),
        source,
    })
}

/// Ids are hex digests; anything else is refused before touching the disk.
fn safe_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric())
}

impl FileStore {
    /// Opens (creating if needed) a store and loads its records.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for d in [root.join("alerts"), root.join("blobs")] {
            std::fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        let mut cache = Cache::default();
        let alerts_dir = root.join("alerts");
        for item in std::fs::read_dir(&alerts_dir).map_err(io_err(&alerts_dir))? {
            let path = item.map_err(io_err(&alerts_dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let a: Alert = read_json(&path)?;
                cache.alerts.insert(a.report_id.clone(), a);
            }
        }
        let devices = root.join("devices.json");
        if devices.exists() {
            let list: Vec<DeviceRecord> = read_json(&devices)?;
            cache.devices = list.into_iter().map(|d| (d.device_id.clone(), d)).collect();
        }
        let audit = root.join("audit.jsonl");
        if audit.exists() {
            let text = std::fs::read_to_string(&audit).map_err(io_err(&audit))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                cache.audit.push(serde_json::from_str(line).map_err(|source| StoreError::Corrupt {
                    path: audit.clone(),
                    source,
                })?);
            }
        }
        Ok(Self {
            root,
            cache: RwLock::new(cache),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn alert_path(&self, id: &str) -> PathBuf {
        self.root.join("alerts").join(format!("{id}.json"))
    }

    fn blob(&self, id: &str, name: &str) -> Result<Option<Vec<u8>>, StoreError> {
        if !safe_id(id) || !self.cache.read().unwrap().alerts.contains_key(id) {
            return Ok(None);
        }
        let path = self.root.join("blobs").join(id).join(name);
        match std::fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn write_alert(&self, alert: &Alert) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(alert).expect("alert serialises");
        write_atomic(&self.alert_path(&alert.report_id), &bytes)
    }
}

impl AlertStore for FileStore {
    fn insert(&self, alert: &Alert, chip: &[u8], snapshot: &[u8]) -> Result<(), StoreError> {
        assert!(safe_id(&alert.report_id), "report ids are generated hex digests");
        let mut cache = self.cache.write().unwrap();
        let dir = self.root.join("blobs").join(&alert.report_id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join("chip.jpg"), chip)?;
        write_atomic(&dir.join("snapshot.jpg"), snapshot)?;
        self.write_alert(alert)?;
        cache.alerts.insert(alert.report_id.clone(), alert.clone());
        Ok(())
    }

    fn update(&self, alert: &Alert) -> Result<(), StoreError> {
        let mut cache = self.cache.write().unwrap();
        self.write_alert(alert)?;
        cache.alerts.insert(alert.report_id.clone(), alert.clone());
        Ok(())
    }

    fn get(&self, report_id: &str) -> Option<Alert> {
        self.cache.read().unwrap().alerts.get(report_id).cloned()
    }

    fn alerts(&self) -> Vec<Alert> {
        self.cache.read().unwrap().alerts.values().cloned().collect()
    }

    fn chip(&self, report_id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        self.blob(report_id, "chip.jpg")
    }

    fn snapshot(&self, report_id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        self.blob(report_id, "snapshot.jpg")
    }

    fn put_device(&self, device: &DeviceRecord) -> Result<(), StoreError> {
        let mut cache = self.cache.write().unwrap();
        let mut next = cache.devices.clone();
        next.insert(device.device_id.clone(), device.clone());
        let list: Vec<&DeviceRecord> = next.values().collect();
        write_atomic(&self.root.join("devices.json"), &serde_json::to_vec_pretty(&list).unwrap())?;
        cache.devices = next;
        Ok(())
    }

    fn devices(&self) -> Vec<DeviceRecord> {
        self.cache.read().unwrap().devices.values().cloned().collect()
    }

    fn append_audit(&self, entry: &AuditEntry) -> Result<(), StoreError> {
        let mut cache = self.cache.write().unwrap();
        let path = self.root.join("audit.jsonl");
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut line = serde_json::to_vec(entry).unwrap();
        line.push(b'\n');
        f.write_all(&line).map_err(io_err(&path))?;
        cache.audit.push(entry.clone());
        Ok(())
    }

    fn audit(&self) -> Vec<AuditEntry> {
        self.cache.read().unwrap().audit.clone()
    }
}
