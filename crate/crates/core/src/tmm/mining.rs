//! Hard-example mining over finished trajectories.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::labels::{assign_soft_labels, compute_pseudo_labels, PseudoFrame};
use super::{Detection, EntryKind, MiningConfig, TmmError, Trajectory, TrajectoryEntry};
use crate::geometry::{min_area_rect, order_corners, Polygon};
use crate::FrameIndex;

/// Estimates the mask of the tracking entry at `frame` from the nearest
/// detection masks before and after it.
///
/// Both detection masks are reduced to their minimum-area rectangles, the
/// rectangles' corners are put in canonical order, and each corner moves
/// `a / (a + b)` of the way from the earlier rectangle to the later one,
/// where `a` and `b` are the frame distances to the two detections.
pub fn interpolate_mask(traj: &Trajectory, frame: FrameIndex) -> Result<Polygon, TmmError> {
    let entries = traj.entries();
    let pos = entries
        .binary_search_by_key(&frame, |e| e.frame)
        .map_err(|_| TmmError::NoFlankingDetections { frame })?;
    if entries[pos].kind != EntryKind::Tracking {
        return Err(TmmError::NotTrackingEntry { frame });
    }
    let with_mask = |e: &&TrajectoryEntry| e.is_detection() && e.mask.is_some();
    let back = entries[..pos].iter().rev().find(with_mask);
    let fwd = entries[pos + 1..].iter().find(with_mask);
    let (Some(back), Some(fwd)) = (back, fwd) else {
        return Err(TmmError::NoFlankingDetections { frame });
    };
    // with_mask guarantees both masks are present.
    let back_rect = min_area_rect(back.mask.as_ref().expect("mask checked"))?;
    let fwd_rect = min_area_rect(fwd.mask.as_ref().expect("mask checked"))?;
    let a = f64::from(frame - back.frame);
    let b = f64::from(fwd.frame - frame);
    let s = a / (a + b);
    let p = order_corners(&back_rect);
    let q = order_corners(&fwd_rect);
    Ok(Polygon::new((0..4).map(|k| p[k].lerp(q[k], s)).collect())?)
}

/// Hard examples of one trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HardExamples {
    /// Tracking entries with interpolated masks; their boxes are the mask bounds.
    pub positives: Vec<TrajectoryEntry>,
    /// Detection entries judged spurious.
    pub negatives: Vec<TrajectoryEntry>,
}

/// Mines hard positives and hard negatives from a finished trajectory.
///
/// A trajectory that is too short, has too few detections or too low a
/// detection ratio yields all of its detections as hard negatives and no
/// hard positives. Otherwise every run of at most `max_gap` tracking entries
/// on consecutive frames, with at least `n_ctx` detections on consecutive
/// frames directly before and after it, yields hard positives.
pub fn mine_hard_examples(traj: &Trajectory, cfg: &MiningConfig) -> HardExamples {
    let len = traj.len();
    let dets = traj.detection_count();
    let ratio = if len == 0 { 0.0 } else { dets as f64 / len as f64 };
    if len < cfg.min_traj_len || dets < cfg.min_det_count || ratio < cfg.min_det_ratio {
        return HardExamples {
            positives: Vec::new(),
            negatives: traj
                .entries()
                .iter()
                .filter(|e| e.is_detection())
                .cloned()
                .collect(),
        };
    }

    let entries = traj.entries();
    let mut positives = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        if entries[i].is_detection() {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < entries.len()
            && entries[i + 1].kind == EntryKind::Tracking
            && entries[i + 1].frame == entries[i].frame + 1
        {
            i += 1;
        }
        let end = i; // inclusive
        i += 1;
        if end - start + 1 > cfg.max_gap {
            continue;
        }
        if !detection_context(entries, start, end, cfg.n_ctx) {
            continue;
        }
        for e in &entries[start..=end] {
            let Ok(mask) = interpolate_mask(traj, e.frame) else {
                continue;
            };
            let Ok(bbox) = mask.bounds() else {
                continue;
            };
            positives.push(TrajectoryEntry {
                bbox,
                mask: Some(mask),
                ..e.clone()
            });
        }
    }
    HardExamples {
        positives,
        negatives: Vec::new(),
    }
}

/// Whether `n_ctx` detections on consecutive frames sit directly before
/// `entries[start]` and directly after `entries[end]`.
fn detection_context(entries: &[TrajectoryEntry], start: usize, end: usize, n_ctx: usize) -> bool {
    if start == 0 || end + 1 >= entries.len() {
        return false;
    }
    let required = n_ctx.max(1);
    let adjacent = |earlier: &TrajectoryEntry, later: &TrajectoryEntry| later.frame == earlier.frame + 1;
    let mut prev = &entries[start];
    let mut before = 0;
    for e in entries[..start].iter().rev().take(required) {
        if !e.is_detection() || !adjacent(e, prev) {
            break;
        }
        before += 1;
        prev = e;
    }
    let mut prev = &entries[end];
    let mut after = 0;
    for e in entries[end + 1..].iter().take(required) {
        if !e.is_detection() || !adjacent(prev, e) {
            break;
        }
        after += 1;
        prev = e;
    }
    before == required && after == required
}

/// A mined entry together with the trajectory it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedEntry {
    pub trajectory_id: u32,
    pub entry: TrajectoryEntry,
}

/// Counts summarizing one mining run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MiningReport {
    pub trajectories: usize,
    pub hard_positives: usize,
    pub hard_negatives: usize,
    pub admitted_frames: usize,
    pub labels: usize,
}

impl MiningReport {
    pub fn merge(&mut self, other: &MiningReport) {
        self.trajectories += other.trajectories;
        self.hard_positives += other.hard_positives;
        self.hard_negatives += other.hard_negatives;
        self.admitted_frames += other.admitted_frames;
        self.labels += other.labels;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MiningOutput {
    pub hard_positives: Vec<MinedEntry>,
    pub hard_negatives: Vec<MinedEntry>,
    /// Admitted frames in frame order, soft labels assigned.
    pub frames: Vec<PseudoFrame>,
    pub report: MiningReport,
}

/// Mines every trajectory of a video and assembles the admitted frames.
///
/// `detections` maps each frame to the detections the trajectories were
/// built from; entry `det_index` values index into those lists.
pub fn mine_video(
    trajectories: &[Trajectory],
    detections: &BTreeMap<FrameIndex, Vec<Detection>>,
    cfg: &MiningConfig,
) -> MiningOutput {
    let mut out = MiningOutput::default();
    let mut hp_by_frame: BTreeMap<FrameIndex, Vec<TrajectoryEntry>> = BTreeMap::new();
    let mut hn_by_frame: BTreeMap<FrameIndex, Vec<usize>> = BTreeMap::new();

    for t in trajectories {
        let mined = mine_hard_examples(t, cfg);
        for e in mined.positives {
            hp_by_frame.entry(e.frame).or_default().push(e.clone());
            out.hard_positives.push(MinedEntry {
                trajectory_id: t.id(),
                entry: e,
            });
        }
        for e in mined.negatives {
            if let Some(i) = e.det_index {
                hn_by_frame.entry(e.frame).or_default().push(i);
            }
            out.hard_negatives.push(MinedEntry {
                trajectory_id: t.id(),
                entry: e,
            });
        }
    }

    let mut frames: Vec<FrameIndex> = hp_by_frame.keys().chain(hn_by_frame.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();
    let empty = Vec::new();
    for f in frames {
        let dets = detections.get(&f).unwrap_or(&empty);
        let hn = hn_by_frame.get(&f).map_or(&[][..], |v| v.as_slice());
        let hp = hp_by_frame.get(&f).map_or(&[][..], |v| v.as_slice());
        if let Some(frame) = compute_pseudo_labels(f, dets, hn, hp) {
            out.frames.push(assign_soft_labels(frame));
        }
    }

    out.report = MiningReport {
        trajectories: trajectories.len(),
        hard_positives: out.hard_positives.len(),
        hard_negatives: out.hard_negatives.len(),
        admitted_frames: out.frames.len(),
        labels: out.frames.iter().map(|f| f.labels.len()).sum(),
    };
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, RotatedRect};
    use alloc::vec;
    use alloc::vec::Vec;

    fn rect_entry(frame: FrameIndex, kind: EntryKind, rect: RotatedRect) -> TrajectoryEntry {
        let mask = Polygon::new(rect.corners().to_vec()).unwrap();
        TrajectoryEntry {
            frame,
            bbox: mask.bounds().unwrap(),
            mask: (kind == EntryKind::Detection).then_some(mask),
            kind,
            score: 0.9,
            det_index: (kind == EntryKind::Detection).then_some(0),
        }
    }

    fn at_x(frame: FrameIndex, kind: EntryKind, x: f64) -> TrajectoryEntry {
        rect_entry(frame, kind, RotatedRect::new(Point::new(x, 20.0), 30.0, 10.0, 0.0))
    }

    fn pattern(p: &str) -> Trajectory {
        let entries = p
            .chars()
            .enumerate()
            .map(|(f, c)| {
                let kind = if c == 'D' { EntryKind::Detection } else { EntryKind::Tracking };
                at_x(f as FrameIndex, kind, 50.0 + 2.0 * f as f64)
            })
            .collect();
        Trajectory::from_entries(0, entries).unwrap()
    }

    fn cfg() -> MiningConfig {
        MiningConfig {
            n_ctx: 2,
            max_gap: 1,
            min_traj_len: 5,
            min_det_count: 2,
            min_det_ratio: 0.3,
            ..MiningConfig::default()
        }
    }

    #[test]
    fn interpolation_midpoint() {
        let t = Trajectory::from_entries(
            0,
            vec![
                at_x(0, EntryKind::Detection, 100.0),
                at_x(1, EntryKind::Tracking, 0.0),
                at_x(2, EntryKind::Detection, 110.0),
            ],
        )
        .unwrap();
        let m = interpolate_mask(&t, 1).unwrap();
        let expected = order_corners(&RotatedRect::new(Point::new(105.0, 20.0), 30.0, 10.0, 0.0));
        for (p, q) in m.vertices().iter().zip(expected) {
            assert!(p.distance(q) < 1e-9);
        }
    }

    #[test]
    fn interpolation_near_back_endpoint() {
        let t = Trajectory::from_entries(
            0,
            vec![
                at_x(0, EntryKind::Detection, 100.0),
                at_x(1, EntryKind::Tracking, 0.0),
                at_x(1001, EntryKind::Detection, 300.0),
            ],
        )
        .unwrap();
        let m = interpolate_mask(&t, 1).unwrap();
        let back = order_corners(&RotatedRect::new(Point::new(100.0, 20.0), 30.0, 10.0, 0.0));
        // 1/1001 of a 200 px move is 0.2 px, within 1% of the 30 px side.
        for (p, q) in m.vertices().iter().zip(back) {
            assert!(p.distance(q) < 0.3);
        }
    }

    #[test]
    fn interpolation_quarter_way_between_rotated_rects() {
        let back = RotatedRect::new(Point::new(50.0, 50.0), 40.0, 10.0, 0.0);
        let fwd = RotatedRect::new(Point::new(70.0, 54.0), 40.0, 10.0, 20.0);
        let t = Trajectory::from_entries(
            0,
            vec![
                rect_entry(10, EntryKind::Detection, back),
                rect_entry(11, EntryKind::Tracking, back),
                rect_entry(14, EntryKind::Detection, fwd),
            ],
        )
        .unwrap();
        let m = interpolate_mask(&t, 11).unwrap();
        // Hand computation: back corners are axis-aligned; forward corners
        // follow from rotating (+-20, +-5) by 20 degrees about (70, 54), the
        // topmost corner first and then clockwise.
        let (s, c) = (libm::sin(20f64.to_radians()), libm::cos(20f64.to_radians()));
        let rot = |u: f64, v: f64| Point::new(70.0 + u * c - v * s, 54.0 + u * s + v * c);
        let fwd_corners = [rot(-20.0, -5.0), rot(20.0, -5.0), rot(20.0, 5.0), rot(-20.0, 5.0)];
        let back_corners = [
            Point::new(30.0, 45.0),
            Point::new(70.0, 45.0),
            Point::new(70.0, 55.0),
            Point::new(30.0, 55.0),
        ];
        for k in 0..4 {
            let want = Point::new(
                back_corners[k].x + 0.25 * (fwd_corners[k].x - back_corners[k].x),
                back_corners[k].y + 0.25 * (fwd_corners[k].y - back_corners[k].y),
            );
            assert!(m.vertices()[k].distance(want) < 1e-9, "corner {k}");
        }
    }

    #[test]
    fn interpolation_needs_both_sides() {
        let t = pattern("DDT");
        assert_eq!(
            interpolate_mask(&t, 2),
            Err(TmmError::NoFlankingDetections { frame: 2 })
        );
        assert_eq!(
            interpolate_mask(&t, 0),
            Err(TmmError::NotTrackingEntry { frame: 0 })
        );
    }

    #[test]
    fn single_flanked_tracking_entry_is_hard_positive() {
        let mined = mine_hard_examples(&pattern("DDTDD"), &cfg());
        assert_eq!(mined.positives.len(), 1);
        assert_eq!(mined.positives[0].frame, 2);
        assert!(mined.positives[0].mask.is_some());
        assert!(mined.negatives.is_empty());
    }

    #[test]
    fn long_tracking_runs_are_not_hard_positives() {
        let c = MiningConfig {
            min_traj_len: 4,
            ..cfg()
        };
        assert!(mine_hard_examples(&pattern("DTTD"), &c).positives.is_empty());
        assert!(mine_hard_examples(&pattern("DDTTDD"), &c).positives.is_empty());
        let wider = MiningConfig { max_gap: 2, ..c };
        assert_eq!(mine_hard_examples(&pattern("DDTTDD"), &wider).positives.len(), 2);
    }

    #[test]
    fn thin_context_is_not_enough() {
        let mined = mine_hard_examples(&pattern("DTDDDD"), &cfg());
        assert!(mined.positives.is_empty());
        let mined = mine_hard_examples(&pattern("DDTDDTD"), &cfg());
        assert_eq!(mined.positives.iter().map(|e| e.frame).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn short_trajectory_yields_hard_negatives_only() {
        let mined = mine_hard_examples(&pattern("DT"), &cfg());
        assert_eq!(mined.negatives.len(), 1);
        assert!(mined.positives.is_empty());

        // Long enough, but too detection-sparse.
        let sparse = mine_hard_examples(&pattern("DTTTTTTTTD"), &cfg());
        assert_eq!(sparse.negatives.len(), 2);
        assert!(sparse.positives.is_empty());
    }

    #[test]
    fn every_positive_has_a_mask() {
        for p in ["DDTDDTDD", "DDDTDDD", "DDTDTDD", "TDDTDDT"] {
            for e in mine_hard_examples(&pattern(p), &cfg()).positives {
                assert!(e.mask.is_some());
            }
        }
    }

    #[test]
    fn mine_video_admits_only_frames_with_hard_examples() {
        let good = pattern("DDTDD");
        let mut dets: BTreeMap<FrameIndex, Vec<Detection>> = BTreeMap::new();
        for e in good.entries().iter().filter(|e| e.is_detection()) {
            dets.entry(e.frame).or_default().push(Detection {
                bbox: e.bbox,
                polygon: e.mask.clone().unwrap(),
                score: e.score,
            });
        }
        let out = mine_video(&[good], &dets, &cfg());
        assert_eq!(out.report.hard_positives, 1);
        assert_eq!(out.report.hard_negatives, 0);
        assert_eq!(out.report.admitted_frames, 1);
        assert_eq!(out.frames[0].frame, 2);
        assert_eq!(out.frames[0].labels.len(), 1);
        assert_eq!(out.frames[0].labels[0].soft_label, Some(1.0));
    }
}
