//! Text mining: trajectory fusion, hard-example mining and pseudo-labels.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, GeometryError, Polygon};
use crate::FrameIndex;

mod labels;
mod matching;
mod mining;
mod store;

pub use labels::{
    assign_soft_labels, balance_bce, compute_pseudo_labels, HardNegative, PseudoFrame,
    PseudoLabel, Provenance, BCE_EPS,
};
pub use matching::{
    build_match_matrix, greedy_matches, resolve_matches, score_pair, Assignment, MatchMatrix,
    MatchingStrategy,
};
pub use mining::{
    interpolate_mask, mine_hard_examples, mine_video, HardExamples, MinedEntry, MiningOutput,
    MiningReport,
};
pub use store::TrajectoryStore;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TmmError {
    #[error("frame {got} presented after frame {last}; frames must strictly increase")]
    OutOfOrderFrame { last: FrameIndex, got: FrameIndex },
    #[error("no detection on both sides of frame {frame}")]
    NoFlankingDetections { frame: FrameIndex },
    #[error("entry at frame {frame} is not a tracking entry")]
    NotTrackingEntry { frame: FrameIndex },
    #[error("invalid mining config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub polygon: Polygon,
    pub score: f64,
}

/// All detections of one frame of one video, as produced by an external detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame_index: FrameIndex,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntryKind {
    Detection,
    Tracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub frame: FrameIndex,
    pub bbox: BBox,
    /// Always present on detection entries; tracking entries get one only
    /// through mask interpolation.
    pub mask: Option<Polygon>,
    pub kind: EntryKind,
    /// Detector confidence or tracker score.
    pub score: f64,
    /// Position of the source detection within its frame.
    pub det_index: Option<usize>,
}

impl TrajectoryEntry {
    pub fn from_detection(frame: FrameIndex, det_index: usize, det: &Detection) -> Self {
        Self {
            frame,
            bbox: det.bbox,
            mask: Some(det.polygon.clone()),
            kind: EntryKind::Detection,
            score: det.score,
            det_index: Some(det_index),
        }
    }

    pub fn is_detection(&self) -> bool {
        self.kind == EntryKind::Detection
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryState {
    Live,
    Terminated,
}

/// Frame-ordered locations of one text instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: u32,
    entries: Vec<TrajectoryEntry>,
    missed_count: u32,
    state: TrajectoryState,
}

impl Trajectory {
    pub(crate) fn start(id: u32, first: TrajectoryEntry) -> Self {
        Self {
            id,
            entries: alloc::vec![first],
            missed_count: 0,
            state: TrajectoryState::Live,
        }
    }

    /// Builds a finished trajectory from entries; they must be strictly frame-ordered.
    pub fn from_entries(id: u32, entries: Vec<TrajectoryEntry>) -> Option<Self> {
        if entries.is_empty() || entries.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return None;
        }
        Some(Self {
            id,
            entries,
            missed_count: 0,
            state: TrajectoryState::Terminated,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    pub fn last(&self) -> &TrajectoryEntry {
        // Never empty: trajectories start with one entry and only grow.
        self.entries.last().expect("trajectory has at least one entry")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn missed_count(&self) -> u32 {
        self.missed_count
    }

    pub fn state(&self) -> TrajectoryState {
        self.state
    }

    pub fn detection_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_detection()).count()
    }

    /// Number of tracking entries at the tail since the last detection.
    pub fn trailing_tracking_run(&self) -> usize {
        self.entries
            .iter()
            .rev()
            .take_while(|e| e.kind == EntryKind::Tracking)
            .count()
    }

    pub fn entry_at(&self, frame: FrameIndex) -> Option<&TrajectoryEntry> {
        self.entries
            .binary_search_by_key(&frame, |e| e.frame)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub(crate) fn push(&mut self, entry: TrajectoryEntry) {
        debug_assert!(entry.frame > self.last().frame);
        self.entries.push(entry);
        self.missed_count = 0;
    }

    pub(crate) fn miss(&mut self, max_missed: u32) {
        self.missed_count += 1;
        if self.missed_count >= max_missed {
            self.state = TrajectoryState::Terminated;
        }
    }

    pub(crate) fn terminate(&mut self) {
        self.state = TrajectoryState::Terminated;
    }
}

/// Thresholds for matching, trajectory management and hard-example mining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    /// A detection matches a trajectory only when its score exceeds this IoU.
    pub theta_iou: f64,
    /// Consecutive detections required on each side of a hard positive.
    pub n_ctx: usize,
    /// Longest run of tracking entries that may become hard positives.
    pub max_gap: usize,
    pub min_traj_len: usize,
    pub min_det_count: usize,
    pub min_det_ratio: f64,
    /// Consecutive frames without any entry before a trajectory terminates.
    pub max_missed: u32,
    /// Longest tail of tracking-only entries a trajectory may grow.
    pub max_track_run: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            theta_iou: 0.5,
            n_ctx: 2,
            max_gap: 1,
            min_traj_len: 5,
            min_det_count: 2,
            min_det_ratio: 0.3,
            max_missed: 2,
            max_track_run: 8,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), TmmError> {
        if !(self.theta_iou > 0.0 && self.theta_iou < 1.0) {
            return Err(TmmError::InvalidConfig("theta_iou must lie in (0, 1)"));
        }
        if !(self.min_det_ratio >= 0.0 && self.min_det_ratio.is_finite()) {
            return Err(TmmError::InvalidConfig("min_det_ratio must be >= 0"));
        }
        if self.max_missed == 0 {
            return Err(TmmError::InvalidConfig("max_missed must be >= 1"));
        }
        Ok(())
    }
}
