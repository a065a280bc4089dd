//! Backend selection from short textual specs, as used on the command line
//! and in config files.
//!
//! Detectors: `null`, `oracle:<script>` (see [`OracleBackend::parse`]).
//! Classifiers: `constant:<score>`, `oracle:<file>` (one score per line,
//! returned in call order).

use std::path::Path;

use gds_core::backend::ScriptError;
use gds_core::{Classifier, ConstantClassifier, Detector, NullBackend, OracleBackend, OracleClassifier};

pub type BoxedDetector = Box<dyn Detector + Send>;
pub type BoxedClassifier = Box<dyn Classifier + Send>;

#[derive(Debug, thiserror::Error)]
pub enum BackendSpecError {
    #[error("unknown backend spec {0:?}")]
    Unknown(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Script { path: String, source: ScriptError },
    #[error("{path}: line {line}: score {value:?} is not in [0, 1]")]
    Score { path: String, line: usize, value: String },
    #[error("{0}: no scores")]
    Empty(String),
}

fn read(path: &str) -> Result<String, BackendSpecError> {
    std::fs::read_to_string(Path::new(path)).map_err(|source| BackendSpecError::Io {
        path: path.into(),
        source,
    })
}

pub fn parse_score(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| (0.0..=1.0).contains(v))
}

pub fn detector_from_spec(spec: &str) -> Result<BoxedDetector, BackendSpecError> {
    match spec.split_once(':') {
        None if spec == "null" => Ok(Box::new(NullBackend)),
        Some(("oracle", path)) => {
            let script = OracleBackend::parse(&read(path)?).map_err(|source| BackendSpecError::Script {
                path: path.into(),
                source,
            })?;
            Ok(Box::new(script))
        }
        _ => Err(BackendSpecError::Unknown(spec.into())),
    }
}

pub fn classifier_from_spec(spec: &str) -> Result<BoxedClassifier, BackendSpecError> {
    match spec.split_once(':') {
        Some(("constant", v)) => {
            let score = parse_score(v).ok_or_else(|| BackendSpecError::Unknown(spec.into()))?;
            Ok(Box::new(ConstantClassifier(score)))
        }
        Some(("oracle", path)) => {
            let mut scores = Vec::new();
            for (i, line) in read(path)?.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                scores.push(parse_score(line).ok_or_else(|| BackendSpecError::Score {
                    path: path.into(),
                    line: i + 1,
                    value: line.into(),
                })?);
            }
            if scores.is_empty() {
                return Err(BackendSpecError::Empty(path.into()));
            }
            Ok(Box::new(OracleClassifier::new(scores)))
        }
        _ => Err(BackendSpecError::Unknown(spec.into())),
    }
}
