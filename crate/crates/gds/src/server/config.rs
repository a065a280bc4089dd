//! Server settings. Sources are layered: command-line flags, then `GDS_*`
//! environment variables, then the TOML file, then built-in defaults.
//!
//! | key                    | env                         | default          |
//! |------------------------|-----------------------------|------------------|
//! | `listen`               | `GDS_LISTEN`                | `127.0.0.1:8080` |
//! | `storage_root`         | `GDS_STORAGE_ROOT`          | `gds-data`       |
//! | `classifier_threshold` | `GDS_CLASSIFIER_THRESHOLD`  | `0.5`            |
//! | `classifier`           | `GDS_CLASSIFIER`            | `constant:1.0`   |
//! | `webhooks`             | `GDS_WEBHOOKS` (comma list) | none             |
//! | `token`                | `GDS_TOKEN`                 | none             |
//! | `public_url`           | `GDS_PUBLIC_URL`            | `http://<listen>`|
//! | `console_dir`          | `GDS_CONSOLE_DIR`           | none             |

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use super::http::{router, RunningServer};
use super::{FileStore, Notifier, Service, ServiceOptions, StoreError, SystemClock, WebhookNotifier};
use crate::backends::{classifier_from_spec, BackendSpecError};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialServerConfig {
    pub listen: Option<String>,
    pub storage_root: Option<PathBuf>,
    pub classifier_threshold: Option<f64>,
    pub classifier: Option<String>,
    pub webhooks: Option<Vec<String>>,
    pub token: Option<String>,
    pub public_url: Option<String>,
    pub console_dir: Option<PathBuf>,
}

impl PartialServerConfig {
    /// Fills every unset field of `self` from `lower`.
    pub fn or(self, lower: Self) -> Self {
        Self {
            listen: self.listen.or(lower.listen),
            storage_root: self.storage_root.or(lower.storage_root),
            classifier_threshold: self.classifier_threshold.or(lower.classifier_threshold),
            classifier: self.classifier.or(lower.classifier),
            webhooks: self.webhooks.or(lower.webhooks),
            token: self.token.or(lower.token),
            public_url: self.public_url.or(lower.public_url),
            console_dir: self.console_dir.or(lower.console_dir),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub listen: String,
    pub storage_root: PathBuf,
    pub classifier_threshold: f64,
    pub classifier: String,
    pub webhooks: Vec<String>,
    pub token: Option<String>,
    pub public_url: String,
    pub console_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("classifier_threshold {0} must be in (0, 1]")]
    Threshold(f64),
}

pub fn load_file(path: &Path) -> Result<PartialServerConfig, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| ConfigFileError::Toml {
        path: path.to_path_buf(),
        source,
    })
}

impl ServerConfig {
    pub fn resolve(p: PartialServerConfig) -> Result<Self, ConfigFileError> {
        let listen = p.listen.unwrap_or_else(|| "127.0.0.1:8080".into());
        let classifier_threshold = p.classifier_threshold.unwrap_or(0.5);
        if !(classifier_threshold > 0.0 && classifier_threshold <= 1.0) {
            return Err(ConfigFileError::Threshold(classifier_threshold));
        }
        Ok(Self {
            public_url: p.public_url.unwrap_or_else(|| format!("http://{listen}")),
            listen,
            storage_root: p.storage_root.unwrap_or_else(|| "gds-data".into()),
            classifier_threshold,
            classifier: p.classifier.unwrap_or_else(|| "constant:1.0".into()),
            webhooks: p.webhooks.unwrap_or_default(),
            token: p.token.filter(|t| !t.is_empty()),
            console_dir: p.console_dir,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LaunchError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("classifier: {0}")]
    Classifier(#[from] BackendSpecError),
    #[error("webhook client: {0}")]
    Webhook(#[from] reqwest::Error),
    #[error("listening on {listen}: {source}")]
    Listen { listen: String, source: std::io::Error },
}

impl ServerConfig {
    pub fn build_service(&self) -> Result<Arc<Service>, LaunchError> {
        let store = Arc::new(FileStore::open(&self.storage_root)?);
        let classifier = classifier_from_spec(&self.classifier)?;
        let notifier: Arc<dyn Notifier> = Arc::new(WebhookNotifier::new(
            self.webhooks.clone(),
            self.public_url.clone(),
            Duration::from_millis(500),
        )?);
        Ok(Arc::new(Service::new(
            store,
            classifier,
            notifier,
            Arc::new(SystemClock),
            ServiceOptions {
                classifier_threshold: self.classifier_threshold,
                ..ServiceOptions::default()
            },
        )))
    }

    /// Builds the service and serves it on `listen`.
    pub fn start(&self) -> Result<(Arc<Service>, RunningServer), LaunchError> {
        let svc = self.build_service()?;
        let app = router(svc.clone(), self.token.clone(), self.console_dir.clone());
        let server = RunningServer::start(app, &self.listen).map_err(|source| LaunchError::Listen {
            listen: self.listen.clone(),
            source,
        })?;
        Ok((svc, server))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_prefers_higher_sources() {
        let file: PartialServerConfig = toml::from_str(
            "listen = \"0.0.0.0:9000\"\nclassifier_threshold = 0.7\nwebhooks = [\"http://a\"]\ntoken = \"t\"",
        )
        .unwrap();
        let flags = PartialServerConfig {
            classifier_threshold: Some(0.6),
            ..Default::default()
        };
        let c = ServerConfig::resolve(flags.or(file)).unwrap();
        assert_eq!(c.classifier_threshold, 0.6);
        assert_eq!(c.listen, "0.0.0.0:9000");
        assert_eq!(c.public_url, "http://0.0.0.0:9000");
        assert_eq!(c.webhooks, ["http://a"]);
        assert_eq!(c.token.as_deref(), Some("t"));
        assert_eq!(c.classifier, "constant:1.0");
    }

    #[test]
    fn unknown_keys_and_bad_threshold_rejected() {
        assert!(toml::from_str::<PartialServerConfig>("colour = 1").is_err());
        let p = PartialServerConfig {
            classifier_threshold: Some(0.0),
            ..Default::default()
        };
        assert!(matches!(ServerConfig::resolve(p), Err(ConfigFileError::Threshold(_))));
    }
}
