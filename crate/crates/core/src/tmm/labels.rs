//! Pseudo-label assembly, soft targets and the balance loss.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Detection, TrajectoryEntry};
use crate::geometry::{BBox, Polygon};
use crate::FrameIndex;

/// Probability clamp used by [`balance_bce`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "det")]
    Detection,
    #[serde(rename = "hp")]
    HardPositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub bbox: BBox,
    pub polygon: Polygon,
    /// Detector or tracker score of the source entry.
    pub score: f64,
    /// Training target in `[0, 1]`, filled by [`assign_soft_labels`].
    pub soft_label: Option<f64>,
    pub provenance: Provenance,
    /// Source detection within the frame, for detection labels.
    pub det_index: Option<usize>,
}

/// A detection rejected as a hard negative, kept for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct HardNegative {
    pub det_index: usize,
    pub bbox: BBox,
    pub score: f64,
}

/// A frame admitted to the pseudo dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoFrame {
    pub frame: FrameIndex,
    pub labels: Vec<PseudoLabel>,
    pub hard_negatives: Vec<HardNegative>,
}

/// Labels of one frame: its detections minus the hard negatives, plus the
/// hard positives. Returns `None` (frame not admitted) unless the frame has
/// at least one hard positive or hard negative.
///
/// `hard_negatives` holds indices into `detections`; hard positives must carry masks.
pub fn compute_pseudo_labels(
    frame: FrameIndex,
    detections: &[Detection],
    hard_negatives: &[usize],
    hard_positives: &[TrajectoryEntry],
) -> Option<PseudoFrame> {
    if hard_negatives.is_empty() && hard_positives.is_empty() {
        return None;
    }
    let mut labels: Vec<PseudoLabel> = detections
        .iter()
        .enumerate()
        .filter(|(i, _)| !hard_negatives.contains(i))
        .map(|(i, d)| PseudoLabel {
            bbox: d.bbox,
            polygon: d.polygon.clone(),
            score: d.score,
            soft_label: None,
            provenance: Provenance::Detection,
            det_index: Some(i),
        })
        .collect();
    labels.extend(hard_positives.iter().map(|e| PseudoLabel {
        bbox: e.bbox,
        polygon: e.mask.clone().unwrap_or_else(|| Polygon::from(&e.bbox)),
        score: e.score,
        soft_label: None,
        provenance: Provenance::HardPositive,
        det_index: None,
    }));

    let mut hn: Vec<usize> = hard_negatives
        .iter()
        .copied()
        .filter(|&i| i < detections.len())
        .collect();
    hn.sort_unstable();
    hn.dedup();
    let hard_negatives = hn
        .into_iter()
        .map(|i| HardNegative {
            det_index: i,
            bbox: detections[i].bbox,
            score: detections[i].score,
        })
        .collect();
    Some(PseudoFrame {
        frame,
        labels,
        hard_negatives,
    })
}

/// Fills soft targets: 1 for hard positives, the source score for detections.
pub fn assign_soft_labels(mut frame: PseudoFrame) -> PseudoFrame {
    for l in &mut frame.labels {
        l.soft_label = Some(match l.provenance {
            Provenance::HardPositive => 1.0,
            Provenance::Detection => l.score.clamp(0.0, 1.0),
        });
    }
    frame
}

/// Binary cross-entropy against a soft target, with `p` clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn balance_bce(target: f64, p: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * libm::log(p) + (1.0 - target) * libm::log(1.0 - p))
}
