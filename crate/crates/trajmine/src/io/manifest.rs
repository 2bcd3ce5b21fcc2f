//! Manifest describing a generated video: its unique frames and replay schedule.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajmine_core::genloop::{FrameSchedule, LoopMode};
use trajmine_core::AffineParams;

use super::{to_canonical_document, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("inconsistent manifest: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenLoopManifest {
    pub source_image: String,
    pub mode: LoopMode,
    /// End transform; unique frame `k` uses the interpolation `k / (n_unique - 1)` toward it.
    pub affine: AffineParams,
    pub n_unique: usize,
    /// Unique frame shown at each emitted position.
    pub schedule: Vec<usize>,
    /// Unique frame files, relative to the manifest.
    pub frame_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl GenLoopManifest {
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.frame_files.len() != self.n_unique {
            return Err(ManifestError::Invalid(format!(
                "{} frame files for {} unique frames",
                self.frame_files.len(),
                self.n_unique
            )));
        }
        if self.schedule.is_empty() {
            return Err(ManifestError::Invalid("schedule is empty".into()));
        }
        let schedule = FrameSchedule::from_positions(self.schedule.clone())
            .ok_or_else(|| ManifestError::Invalid("schedule skips a unique frame".into()))?;
        if schedule.n_unique() != self.n_unique {
            return Err(ManifestError::Invalid(format!(
                "schedule references {} unique frames, expected {}",
                schedule.n_unique(),
                self.n_unique
            )));
        }
        self.affine
            .validate()
            .map_err(|e| ManifestError::Invalid(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical_document(self).expect("manifests always serialize")
    }
}

pub fn parse_manifest(bytes: &[u8]) -> Result<GenLoopManifest, ManifestError> {
    let m: GenLoopManifest = serde_json::from_slice(bytes)?;
    m.validate()?;
    Ok(m)
}

pub fn read_manifest(path: &Path) -> Result<GenLoopManifest, ManifestError> {
    parse_manifest(&fs::read(path)?)
}

pub fn write_manifest(m: &GenLoopManifest, path: &Path) -> io::Result<()> {
    write_atomic(path, &m.to_bytes())
}
