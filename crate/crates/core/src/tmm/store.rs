use alloc::vec::Vec;

use super::matching::{build_match_matrix, MatchingStrategy};
use super::{Detection, EntryKind, MiningConfig, TmmError, Trajectory, TrajectoryEntry, TrajectoryState};
use crate::tracker::Tracker;
use crate::FrameIndex;

struct LiveTrack<Tpl> {
    trajectory: Trajectory,
    template: Option<Tpl>,
}

/// Trajectories of one video, advanced one frame at a time.
pub struct TrajectoryStore<T: Tracker> {
    cfg: MiningConfig,
    strategy: MatchingStrategy,
    live: Vec<LiveTrack<T::Template>>,
    finished: Vec<Trajectory>,
    next_id: u32,
    last_frame: Option<FrameIndex>,
}

impl<T: Tracker> TrajectoryStore<T> {
    pub fn new(cfg: MiningConfig, strategy: MatchingStrategy) -> Self {
        Self {
            cfg,
            strategy,
            live: Vec::new(),
            finished: Vec::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    pub fn live(&self) -> impl Iterator<Item = &Trajectory> {
        self.live.iter().map(|l| &l.trajectory)
    }

    pub fn finished(&self) -> &[Trajectory] {
        &self.finished
    }

    /// Advances every live trajectory to `frame_index`.
    ///
    /// Each live trajectory first gets a provisional tracking result. The
    /// detections are then associated with trajectories; a matched trajectory
    /// appends the detection and drops its tracking result, an unmatched one
    /// keeps the tracking result unless its tracking-only tail is already
    /// `max_track_run` long, and a trajectory left with neither counts a miss.
    /// Detections that match nothing start new trajectories.
    pub fn step_frame(
        &mut self,
        frame_index: FrameIndex,
        frame: &T::Frame,
        detections: &[Detection],
        tracker: &T,
    ) -> Result<(), TmmError> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(TmmError::OutOfOrderFrame {
                    last,
                    got: frame_index,
                });
            }
        }
        self.last_frame = Some(frame_index);

        let provisional: Vec<_> = self
            .live
            .iter()
            .map(|l| tracker.track(l.trajectory.last(), l.template.as_ref(), frame))
            .collect();

        let det_boxes: Vec<_> = detections.iter().map(|d| d.bbox).collect();
        let traj_boxes: Vec<_> = self
            .live
            .iter()
            .zip(&provisional)
            .map(|(l, p)| (p.as_ref().map(|r| r.bbox), l.trajectory.last().bbox))
            .collect();
        let matrix = build_match_matrix(&det_boxes, &traj_boxes);
        let assignment = self.strategy.resolve(&matrix, self.cfg.theta_iou);
        let traj_to_det = assignment.traj_to_det(self.live.len());

        for ((live, tracked), det) in self.live.iter_mut().zip(provisional).zip(traj_to_det) {
            let entry = match (det, tracked) {
                (Some(i), _) => Some(TrajectoryEntry::from_detection(
                    frame_index,
                    i,
                    &detections[i],
                )),
                (None, Some(r))
                    if live.trajectory.trailing_tracking_run() < self.cfg.max_track_run =>
                {
                    Some(TrajectoryEntry {
                        frame: frame_index,
                        bbox: r.bbox,
                        mask: None,
                        kind: EntryKind::Tracking,
                        score: r.score,
                        det_index: None,
                    })
                }
                _ => None,
            };
            match entry {
                Some(entry) => {
                    live.template = tracker.refresh_template(live.template.take(), &entry, frame);
                    live.trajectory.push(entry);
                }
                None => live.trajectory.miss(self.cfg.max_missed),
            }
        }

        let (ended, kept): (Vec<_>, Vec<_>) = core::mem::take(&mut self.live)
            .into_iter()
            .partition(|l| l.trajectory.state() == TrajectoryState::Terminated);
        self.live = kept;
        self.finished.extend(ended.into_iter().map(|l| l.trajectory));

        for i in assignment.unmatched() {
            let entry = TrajectoryEntry::from_detection(frame_index, i, &detections[i]);
            let template = tracker.refresh_template(None, &entry, frame);
            self.live.push(LiveTrack {
                trajectory: Trajectory::start(self.next_id, entry),
                template,
            });
            self.next_id += 1;
        }
        Ok(())
    }

    /// Terminates everything still live and returns all trajectories by id.
    pub fn finish(mut self) -> Vec<Trajectory> {
        for mut l in self.live.drain(..) {
            l.trajectory.terminate();
            self.finished.push(l.trajectory);
        }
        self.finished.sort_by_key(|t| t.id());
        self.finished
    }
}
