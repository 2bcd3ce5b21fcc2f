//! Line-delimited detection records, one JSON object per frame.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajmine_core::{BBox, Detection, DetectionRecord, FrameIndex, Polygon};

use super::{to_canonical_json, write_atomic};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Range { line: usize, reason: String },
    #[error("line {line}: duplicate frame {frame} for video {video_id:?}")]
    DuplicateFrame {
        line: usize,
        video_id: String,
        frame: FrameIndex,
    },
}

impl IngestError {
    /// 1-based line of the offending record, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Io { .. } => None,
            IngestError::Parse { line, .. }
            | IngestError::Range { line, .. }
            | IngestError::DuplicateFrame { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    bbox: [f64; 4],
    polygon: Vec<f64>,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    video_id: String,
    frame_index: u64,
    detections: Vec<RawDetection>,
}

fn convert(raw: RawRecord, line: usize) -> Result<DetectionRecord, IngestError> {
    let range = |reason: String| IngestError::Range { line, reason };
    let frame_index = FrameIndex::try_from(raw.frame_index)
        .map_err(|_| range(format!("frame_index {} is too large", raw.frame_index)))?;
    let mut detections = Vec::with_capacity(raw.detections.len());
    for (k, d) in raw.detections.into_iter().enumerate() {
        let [x1, y1, x2, y2] = d.bbox;
        let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| range(format!("detection {k}: {e}")))?;
        if d.polygon.len() < 6 || d.polygon.len() % 2 != 0 {
            return Err(range(format!(
                "detection {k}: polygon needs an even number (>= 6) of coordinates, got {}",
                d.polygon.len()
            )));
        }
        let polygon =
            Polygon::from_flat(&d.polygon).map_err(|e| range(format!("detection {k}: {e}")))?;
        if !(0.0..=1.0).contains(&d.score) {
            return Err(range(format!("detection {k}: score {} outside [0, 1]", d.score)));
        }
        detections.push(Detection {
            bbox,
            polygon,
            score: d.score,
        });
    }
    Ok(DetectionRecord {
        video_id: raw.video_id,
        frame_index,
        detections,
    })
}

/// Parses a detection stream. Blank lines are skipped; records keep file order.
pub fn parse_detections<R: BufRead>(reader: R) -> Result<Vec<DetectionRecord>, IngestError> {
    let mut records = Vec::new();
    let mut seen: BTreeSet<(String, FrameIndex)> = BTreeSet::new();
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| IngestError::Parse {
            line,
            reason: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
            line,
            reason: e.to_string(),
        })?;
        let record = convert(raw, line)?;
        if !seen.insert((record.video_id.clone(), record.frame_index)) {
            return Err(IngestError::DuplicateFrame {
                line,
                video_id: record.video_id,
                frame: record.frame_index,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_detections(BufReader::new(file))
}

fn to_raw(r: &DetectionRecord) -> RawRecord {
    RawRecord {
        video_id: r.video_id.clone(),
        frame_index: u64::from(r.frame_index),
        detections: r
            .detections
            .iter()
            .map(|d| RawDetection {
                bbox: d.bbox.to_array(),
                polygon: d.polygon.to_flat(),
                score: d.score,
            })
            .collect(),
    }
}

/// One canonical JSON line per record.
pub fn detections_to_jsonl(records: &[DetectionRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        out.extend(to_canonical_json(&to_raw(r)).expect("records always serialize"));
        out.push(b'\n');
    }
    out
}

pub fn write_detections(records: &[DetectionRecord], path: &Path) -> io::Result<()> {
    write_atomic(path, &detections_to_jsonl(records))
}

/// Groups records by video, each video's frames sorted by index.
pub fn group_by_video(
    records: Vec<DetectionRecord>,
) -> BTreeMap<String, BTreeMap<FrameIndex, Vec<Detection>>> {
    let mut out: BTreeMap<String, BTreeMap<FrameIndex, Vec<Detection>>> = BTreeMap::new();
    for r in records {
        out.entry(r.video_id)
            .or_default()
            .insert(r.frame_index, r.detections);
    }
    out
}
