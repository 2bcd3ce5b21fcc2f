//! Trajectory fusion and hard-example mining for self-training text detectors.
//!
//! Detections from any external detector are fused with template-matching
//! tracking results into per-instance trajectories. Tracking entries wedged
//! between runs of detections become hard positives, detections that live in
//! short or detection-sparse trajectories become hard negatives, and every
//! frame that carries at least one hard example is emitted with soft labels.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, image decoding and
//! the command-line front end live in the `trajmine` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod genloop;
pub mod geometry;
pub mod image;
pub mod sim;
pub mod tmm;
pub mod tracker;

pub use geometry::{AffineParams, BBox, GeometryError, Point, Polygon, RotatedRect};
pub use image::Image;
pub use tmm::{
    Detection, DetectionRecord, EntryKind, MatchingStrategy, MiningConfig, Trajectory,
    TrajectoryEntry, TrajectoryStore,
};
pub use tracker::{TemplateTracker, Tracker, TrackerConfig, TrackingResult};

/// Frame index within one video.
pub type FrameIndex = u32;
