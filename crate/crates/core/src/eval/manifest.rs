//! JSON-lines dataset manifests: one clip per line.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::td::Label;
use crate::text::Transcript;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipRecord {
    pub id: String,
    pub path: PathBuf,
    pub ground_truth: Transcript,
    pub adversarial_target: Option<Transcript>,
    pub label: Label,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    path: PathBuf,
    ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adversarial_target: Option<String>,
    label: Label,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("manifest line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("manifest line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
}

impl ClipRecord {
    pub fn benign(id: impl Into<String>, path: impl Into<PathBuf>, ground_truth: &str) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            ground_truth: Transcript::new(ground_truth),
            adversarial_target: None,
            label: Label::Benign,
        }
    }

    pub fn adversarial(
        id: impl Into<String>,
        path: impl Into<PathBuf>,
        ground_truth: &str,
        target: Option<&str>,
    ) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            ground_truth: Transcript::new(ground_truth),
            adversarial_target: target.map(Transcript::new),
            label: Label::Adversarial,
        }
    }

    /// Record invariants, as a message suitable for a line error.
    pub fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.ground_truth.is_empty() {
            return Err("ground_truth is empty".into());
        }
        if self.label == Label::Benign && self.adversarial_target.is_some() {
            return Err("benign record carries an adversarial_target".into());
        }
        Ok(())
    }

    /// WAV location; relative paths are taken relative to `base`.
    pub fn resolve(&self, base: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        }
    }

    fn to_raw(&self) -> RawRecord {
        RawRecord {
            id: self.id.clone(),
            path: self.path.clone(),
            ground_truth: self.ground_truth.as_str().to_string(),
            adversarial_target: self.adversarial_target.as_ref().map(|t| t.as_str().to_string()),
            label: self.label,
        }
    }
}

/// Parses manifest text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_manifest(text: &str) -> Result<Vec<ClipRecord>, ManifestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| ManifestError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = ClipRecord {
            id: raw.id,
            path: raw.path,
            ground_truth: Transcript::new(&raw.ground_truth),
            adversarial_target: raw.adversarial_target.as_deref().map(Transcript::new),
            label: raw.label,
        };
        record.check().map_err(|message| ManifestError::Malformed {
            line: line_no,
            message,
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(ManifestError::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ClipRecord>, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_manifest(&text)
}

pub fn manifest_to_string(records: &[ClipRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(&r.to_raw()).expect("manifest record serializes");
        writeln!(out, "{line}").expect("string write");
    }
    out
}

pub fn save_manifest(records: &[ClipRecord], path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, manifest_to_string(records))
}
