//! Pseudo-label dataset document.
//!
//! ```json
//! {"frames":[{"frame_index":3,"hard_negatives":[...],"labels":[...],"video_id":"v"}],"meta":{...}}
//! ```
//!
//! Keys are sorted and floats carry six decimals, so equal datasets always
//! produce equal bytes.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use trajmine_core::tmm::{assign_soft_labels, HardNegative, Provenance, PseudoFrame, PseudoLabel};
use trajmine_core::{BBox, FrameIndex, Polygon};

use super::{to_canonical_document, write_atomic};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed dataset: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("frame {frame} of {video_id:?}: {reason}")]
    Invalid {
        video_id: String,
        frame: FrameIndex,
        reason: String,
    },
}

/// An admitted frame tagged with its video.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFrame {
    pub video_id: String,
    pub frame: PseudoFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDataset {
    pub meta: Value,
    pub frames: Vec<DatasetFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelDoc {
    bbox: [f64; 4],
    polygon: Vec<f64>,
    soft_label: f64,
    provenance: Provenance,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    det_index: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HardNegativeDoc {
    det_index: usize,
    bbox: [f64; 4],
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    video_id: String,
    frame_index: FrameIndex,
    labels: Vec<LabelDoc>,
    hard_negatives: Vec<HardNegativeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    meta: Value,
    frames: Vec<FrameDoc>,
}

fn frame_doc(f: &DatasetFrame) -> FrameDoc {
    let frame = if f.frame.labels.iter().any(|l| l.soft_label.is_none()) {
        assign_soft_labels(f.frame.clone())
    } else {
        f.frame.clone()
    };
    FrameDoc {
        video_id: f.video_id.clone(),
        frame_index: frame.frame,
        labels: frame
            .labels
            .iter()
            .map(|l| LabelDoc {
                bbox: l.bbox.to_array(),
                polygon: l.polygon.to_flat(),
                soft_label: l.soft_label.unwrap_or(l.score),
                provenance: l.provenance,
                score: l.score,
                det_index: l.det_index,
            })
            .collect(),
        hard_negatives: frame
            .hard_negatives
            .iter()
            .map(|h| HardNegativeDoc {
                det_index: h.det_index,
                bbox: h.bbox.to_array(),
                score: h.score,
            })
            .collect(),
    }
}

fn from_doc(doc: FrameDoc) -> Result<DatasetFrame, DatasetError> {
    let invalid = |reason: String| DatasetError::Invalid {
        video_id: doc.video_id.clone(),
        frame: doc.frame_index,
        reason,
    };
    let unit = |name: &str, v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(invalid(format!("{name} {v} outside [0, 1]")))
        }
    };
    let bbox = |b: [f64; 4]| BBox::new(b[0], b[1], b[2], b[3]).map_err(|e| invalid(e.to_string()));
    let mut labels = Vec::with_capacity(doc.labels.len());
    for l in &doc.labels {
        labels.push(PseudoLabel {
            bbox: bbox(l.bbox)?,
            polygon: Polygon::from_flat(&l.polygon).map_err(|e| invalid(e.to_string()))?,
            score: unit("score", l.score)?,
            soft_label: Some(unit("soft_label", l.soft_label)?),
            provenance: l.provenance,
            det_index: l.det_index,
        });
    }
    let mut hard_negatives = Vec::with_capacity(doc.hard_negatives.len());
    for h in &doc.hard_negatives {
        hard_negatives.push(HardNegative {
            det_index: h.det_index,
            bbox: bbox(h.bbox)?,
            score: unit("score", h.score)?,
        });
    }
    Ok(DatasetFrame {
        video_id: doc.video_id,
        frame: PseudoFrame {
            frame: doc.frame_index,
            labels,
            hard_negatives,
        },
    })
}

/// Canonical bytes of a dataset.
pub fn dataset_to_bytes(ds: &PseudoDataset) -> Vec<u8> {
    let doc = DatasetDoc {
        meta: ds.meta.clone(),
        frames: ds.frames.iter().map(frame_doc).collect(),
    };
    to_canonical_document(&doc).expect("datasets always serialize")
}

pub fn parse_pseudo_dataset(bytes: &[u8]) -> Result<PseudoDataset, DatasetError> {
    let doc: DatasetDoc = serde_json::from_slice(bytes)?;
    let frames = doc
        .frames
        .into_iter()
        .map(from_doc)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PseudoDataset {
        meta: doc.meta,
        frames,
    })
}

pub fn write_pseudo_dataset(ds: &PseudoDataset, path: &Path) -> io::Result<()> {
    write_atomic(path, &dataset_to_bytes(ds))
}

pub fn read_pseudo_dataset(path: &Path) -> Result<PseudoDataset, DatasetError> {
    parse_pseudo_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn label(x: f64, provenance: Provenance) -> PseudoLabel {
        let bbox = BBox::new(x, 1.0, x + 4.5, 3.25).unwrap();
        PseudoLabel {
            bbox,
            polygon: Polygon::from(&bbox),
            score: 0.75,
            soft_label: Some(if provenance == Provenance::HardPositive { 1.0 } else { 0.75 }),
            provenance,
            det_index: (provenance == Provenance::Detection).then_some(0),
        }
    }

    fn sample() -> PseudoDataset {
        PseudoDataset {
            meta: json!({"tool": "trajmine", "threshold": 0.5}),
            frames: vec![DatasetFrame {
                video_id: "clip".into(),
                frame: PseudoFrame {
                    frame: 4,
                    labels: vec![label(0.0, Provenance::Detection), label(10.0, Provenance::HardPositive)],
                    hard_negatives: vec![HardNegative {
                        det_index: 1,
                        bbox: BBox::new(20.0, 0.0, 22.0, 2.0).unwrap(),
                        score: 0.5,
                    }],
                },
            }],
        }
    }

    #[test]
    fn round_trip() {
        let ds = sample();
        let bytes = dataset_to_bytes(&ds);
        let back = parse_pseudo_dataset(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(dataset_to_bytes(&back), bytes);
    }

    #[test]
    fn empty_dataset_is_valid() {
        let ds = PseudoDataset {
            meta: json!({}),
            frames: vec![],
        };
        let bytes = dataset_to_bytes(&ds);
        assert_eq!(bytes, b"{\"frames\":[],\"meta\":{}}\n");
        assert_eq!(parse_pseudo_dataset(&bytes).unwrap(), ds);
    }

    #[test]
    fn label_keys() {
        let text = String::from_utf8(dataset_to_bytes(&sample())).unwrap();
        assert!(text.contains(r#"{"bbox":[10.000000,1.000000,14.500000,3.250000],"polygon":"#));
        assert!(text.contains(r#""provenance":"hp","score":0.750000,"soft_label":1.000000}"#));
    }

    #[test]
    fn missing_soft_labels_are_filled() {
        let mut ds = sample();
        ds.frames[0].frame.labels.iter_mut().for_each(|l| l.soft_label = None);
        let back = parse_pseudo_dataset(&dataset_to_bytes(&ds)).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn out_of_range_values_rejected() {
        let text = String::from_utf8(dataset_to_bytes(&sample()))
            .unwrap()
            .replace("\"soft_label\":1.000000", "\"soft_label\":1.500000");
        assert!(matches!(
            parse_pseudo_dataset(text.as_bytes()),
            Err(DatasetError::Invalid { frame: 4, .. })
        ));
    }
}
