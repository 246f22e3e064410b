//! JSON instance files.
//!
//! ```json
//! {"kind": "bordered", "payload": {...}, "policy": {...}}
//! ```
//!
//! `kind` is one of `measure`, `rstar`, `bordered`; `policy` is optional.
//! Floats are written in the shortest form that parses back to the same
//! value, so parse → emit → parse is the identity.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bordered::VPolymorphism;
use crate::measure::AtomicMeasure;
use crate::policy::TruncationPolicy;
use crate::rstar::RStarPolymorphism;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum Payload {
    Measure(AtomicMeasure),
    Rstar(RStarPolymorphism),
    Bordered(VPolymorphism),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Measure(_) => "measure",
            Payload::Rstar(_) => "rstar",
            Payload::Bordered(_) => "bordered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(flatten)]
    pub payload: Payload,
    #[serde(default)]
    pub policy: TruncationPolicy,
}

/// Failure to read or parse an instance file.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("schema error: {0}")]
    Schema(String),
}

impl InstanceFile {
    pub fn new(payload: Payload) -> Self {
        InstanceFile {
            payload,
            policy: TruncationPolicy::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| IoError::Schema(e.to_string()))?;
        file.policy.check().map_err(|e| IoError::Schema(e.to_string()))?;
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| IoError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    s.push('\n');
    s
}
