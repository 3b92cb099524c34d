//! Artifact file conventions: provenance headers, JSONL, and JSON documents.
//!
//! Every artifact begins with a header recording the tool version, a short
//! hash of the effective configuration, and the global seed. JSONL files
//! carry it as a first line `{"_header":{…}}`; single JSON documents carry a
//! top-level `_header` member, which sorts lexicographically first among the
//! keys used here.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::util::canonical_json;

/// Provenance stamp at the head of every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl ArtifactHeader {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.into(),
            seed,
        }
    }
}

/// Short content hash of a configuration: first 16 hex chars of the SHA-256
/// of its canonical JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = canonical_json(config).expect("configurations always serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(digest)[..16].to_string()
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {detail}")]
    Parse { path: PathBuf, line: usize, detail: String },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

impl ArtifactError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// JSONL line wrapper for the header.
#[derive(Serialize, Deserialize)]
struct HeaderLine {
    _header: ArtifactHeader,
}

/// Streaming JSONL artifact writer; the header line is written on creation.
pub struct JsonlWriter {
    path: PathBuf,
    inner: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path, header: &ArtifactHeader) -> Result<Self, ArtifactError> {
        let file = File::create(path).map_err(|e| ArtifactError::io(path, e))?;
        let mut writer = Self { path: path.to_path_buf(), inner: BufWriter::new(file) };
        writer.write_raw(&serde_json::to_string(&HeaderLine { _header: header.clone() }).expect(
            "headers always serialize",
        ))?;
        Ok(writer)
    }

    fn write_raw(&mut self, line: &str) -> Result<(), ArtifactError> {
        self.inner
            .write_all(line.as_bytes())
            .and_then(|_| self.inner.write_all(b"\n"))
            .map_err(|e| ArtifactError::io(&self.path, e))
    }

    /// Write one pre-serialized JSON line verbatim.
    pub fn write_line(&mut self, line: &str) -> Result<(), ArtifactError> {
        self.write_raw(line)
    }

    pub fn write_record<T: Serialize>(&mut self, record: &T) -> Result<(), ArtifactError> {
        let line = serde_json::to_string(record).map_err(|e| ArtifactError::Format {
            path: self.path.clone(),
            detail: e.to_string(),
        })?;
        self.write_raw(&line)
    }

    pub fn finish(mut self) -> Result<(), ArtifactError> {
        self.inner.flush().map_err(|e| ArtifactError::io(&self.path, e))
    }
}

/// Read a JSONL artifact: the optional leading header plus all records.
/// Blank lines are tolerated.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
) -> Result<(Option<ArtifactHeader>, Vec<T>), ArtifactError> {
    let file = File::open(path).map_err(|e| ArtifactError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ArtifactError::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 {
            if let Ok(h) = serde_json::from_str::<HeaderLine>(trimmed) {
                header = Some(h._header);
                continue;
            }
        }
        let record: T = serde_json::from_str(trimmed).map_err(|e| ArtifactError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok((header, records))
}

/// Write a single JSON document with `_header` injected at the top level.
/// The payload must serialize to a JSON object.
pub fn write_json_doc<T: Serialize>(
    path: &Path,
    header: &ArtifactHeader,
    payload: &T,
) -> Result<(), ArtifactError> {
    let mut value = serde_json::to_value(payload).map_err(|e| ArtifactError::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let serde_json::Value::Object(ref mut map) = value else {
        return Err(ArtifactError::Format {
            path: path.to_path_buf(),
            detail: "document artifacts must be JSON objects".to_string(),
        });
    };
    map.insert(
        "_header".to_string(),
        serde_json::to_value(header).expect("headers always serialize"),
    );
    let text = serde_json::to_string_pretty(&value).expect("values always serialize");
    let mut file = File::create(path).map_err(|e| ArtifactError::io(path, e))?;
    file.write_all(text.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| ArtifactError::io(path, e))
}

/// Read a single JSON document, splitting off its `_header` member.
pub fn read_json_doc<T: DeserializeOwned>(
    path: &Path,
) -> Result<(Option<ArtifactHeader>, T), ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(|e| ArtifactError::io(path, e))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ArtifactError::Parse {
            path: path.to_path_buf(),
            line: 1,
            detail: e.to_string(),
        })?;
    let header = value
        .as_object_mut()
        .and_then(|map| map.remove("_header"))
        .and_then(|h| serde_json::from_value(h).ok());
    let payload: T = serde_json::from_value(value).map_err(|e| ArtifactError::Parse {
        path: path.to_path_buf(),
        line: 1,
        detail: e.to_string(),
    })?;
    Ok((header, payload))
}
