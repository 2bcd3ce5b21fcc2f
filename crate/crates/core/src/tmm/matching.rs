//! Detection-to-trajectory association.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};

/// How detections are associated with live trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchingStrategy {
    /// Accept a pair only when each side is the other's best candidate;
    /// rejected cells are suppressed and the detection searches again.
    #[default]
    MutualBest,
    /// Trajectories claim their best remaining detection one after another.
    Greedy,
}

/// Association score between a detection and a trajectory: the better of the
/// overlaps with the provisional tracking result and with the last entry.
pub fn score_pair(det: &BBox, tracked: Option<&BBox>, last: &BBox) -> f64 {
    let to_last = iou(det, last);
    match tracked {
        Some(t) => iou(det, t).max(to_last),
        None => to_last,
    }
}

/// Detections x trajectories score matrix with a suppression mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    suppressed: Vec<bool>,
}

impl MatchMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            suppressed: vec![false; rows * cols],
        }
    }

    /// Builds a matrix from row slices; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::new(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged match matrix");
            for (j, v) in r.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Suppressed cells read as zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let k = i * self.cols + j;
        if self.suppressed[k] {
            0.0
        } else {
            self.values[k]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v.clamp(0.0, 1.0);
    }

    pub fn suppress(&mut self, i: usize, j: usize) {
        self.suppressed[i * self.cols + j] = true;
    }

    pub fn is_suppressed(&self, i: usize, j: usize) -> bool {
        self.suppressed[i * self.cols + j]
    }

    /// Column of the largest value in row `i`, lowest index on ties.
    pub fn row_argmax(&self, i: usize) -> Option<usize> {
        argmax((0..self.cols).map(|j| self.get(i, j)))
    }

    /// Row of the largest value in column `j`, lowest index on ties.
    pub fn col_argmax(&self, j: usize) -> Option<usize> {
        argmax((0..self.rows).map(|i| self.get(i, j)))
    }

    pub fn row_max(&self, i: usize) -> f64 {
        (0..self.cols).map(|j| self.get(i, j)).fold(0.0, f64::max)
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Scores every detection against every trajectory. `trajectories` holds, per
/// trajectory, the provisional tracking box (if any) and the last entry's box.
pub fn build_match_matrix(detections: &[BBox], trajectories: &[(Option<BBox>, BBox)]) -> MatchMatrix {
    let mut m = MatchMatrix::new(detections.len(), trajectories.len());
    for (i, d) in detections.iter().enumerate() {
        for (j, (tracked, last)) in trajectories.iter().enumerate() {
            m.set(i, j, score_pair(d, tracked.as_ref(), last));
        }
    }
    m
}

/// Result of association: `det_to_traj[i]` is the trajectory column matched to
/// detection `i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub det_to_traj: Vec<Option<usize>>,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.det_to_traj
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (i, j)))
    }

    pub fn unmatched(&self) -> impl Iterator<Item = usize> + '_ {
        self.det_to_traj
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.is_none().then_some(i))
    }

    pub fn traj_to_det(&self, n_traj: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_traj];
        for (i, j) in self.pairs() {
            out[j] = Some(i);
        }
        out
    }
}

/// Mutual-best association with suppression and re-search.
///
/// Detections are visited by descending row maximum (lowest index first on
/// ties). A detection proposes its best trajectory; the pair is accepted if
/// the detection is also the best in that trajectory's column and the score
/// exceeds `theta`. Otherwise the cell is suppressed and the detection
/// proposes again, until it is matched or nothing above `theta` remains.
pub fn resolve_matches(m: &MatchMatrix, theta: f64) -> Assignment {
    let mut work = m.clone();
    let mut det_to_traj = vec![None; m.rows()];

    let mut order: Vec<usize> = (0..m.rows()).collect();
    let row_max: Vec<f64> = (0..m.rows()).map(|i| m.row_max(i)).collect();
    order.sort_by(|&a, &b| {
        row_max[b]
            .partial_cmp(&row_max[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    for i in order {
        while let Some(j) = work.row_argmax(i) {
            if work.get(i, j) <= theta {
                break;
            }
            if work.col_argmax(j) == Some(i) {
                det_to_traj[i] = Some(j);
                break;
            }
            work.suppress(i, j);
        }
    }
    Assignment { det_to_traj }
}

/// First-come-first-served association: trajectories, in column order, each
/// take the best still-unclaimed detection scoring above `theta`.
pub fn greedy_matches(m: &MatchMatrix, theta: f64) -> Assignment {
    let mut det_to_traj = vec![None; m.rows()];
    for j in 0..m.cols() {
        let best = argmax((0..m.rows()).map(|i| {
            if det_to_traj[i].is_some() {
                f64::NEG_INFINITY
            } else {
                m.get(i, j)
            }
        }));
        if let Some(i) = best {
            if det_to_traj[i].is_none() && m.get(i, j) > theta {
                det_to_traj[i] = Some(j);
            }
        }
    }
    Assignment { det_to_traj }
}

impl MatchingStrategy {
    pub fn resolve(self, m: &MatchMatrix, theta: f64) -> Assignment {
        match self {
            MatchingStrategy::MutualBest => resolve_matches(m, theta),
            MatchingStrategy::Greedy => greedy_matches(m, theta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn score_pair_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(score_pair(&a, Some(&a), &a), 1.0);
        let far = bx(50.0, 50.0, 60.0, 60.0);
        assert_eq!(score_pair(&far, Some(&a), &a), 0.0);
        // IoU(d, t) = 0.2 and IoU(d, last) = 0.6.
        let d = bx(0.0, 0.0, 10.0, 10.0);
        let t = bx(0.0, 0.0, 10.0, 50.0);
        let last = bx(0.0, 0.0, 10.0, 6.0);
        assert!((iou(&d, &t) - 0.2).abs() < 1e-12);
        assert!((iou(&d, &last) - 0.6).abs() < 1e-12);
        assert!((score_pair(&d, Some(&t), &last) - 0.6).abs() < 1e-12);
        assert!((score_pair(&d, None, &last) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn build_match_matrix_shapes_and_cells() {
        let t = bx(0.0, 0.0, 10.0, 10.0);
        let m = build_match_matrix(&[], &[(None, t), (Some(t), t)]);
        assert_eq!((m.rows(), m.cols()), (0, 2));

        let m = build_match_matrix(&[t], &[(None, t)]);
        assert_eq!(m.get(0, 0), 1.0);

        let dets = [bx(0.0, 0.0, 10.0, 10.0), bx(30.0, 0.0, 40.0, 10.0)];
        let trajs = [
            (Some(bx(2.0, 0.0, 12.0, 10.0)), bx(4.0, 0.0, 14.0, 10.0)),
            (None, bx(33.0, 1.0, 43.0, 11.0)),
        ];
        let m = build_match_matrix(&dets, &trajs);
        for (i, d) in dets.iter().enumerate() {
            for (j, (tr, last)) in trajs.iter().enumerate() {
                let direct = iou(d, last).max(tr.map_or(0.0, |t| iou(d, &t)));
                assert_eq!(m.get(i, j), direct);
            }
        }
    }

    #[test]
    fn resolve_examples() {
        let a = resolve_matches(&MatchMatrix::from_rows(&[[0.8]]), 0.5);
        assert_eq!(a.det_to_traj, vec![Some(0)]);

        let a = resolve_matches(&MatchMatrix::from_rows(&[[0.4]]), 0.5);
        assert_eq!(a.det_to_traj, vec![None]);

        let a = resolve_matches(&MatchMatrix::from_rows(&[[0.9, 0.6], [0.8, 0.1]]), 0.5);
        assert_eq!(a.det_to_traj, vec![Some(0), None]);
    }

    #[test]
    fn suppressed_cells_read_zero() {
        let mut m = MatchMatrix::from_rows(&[[0.7, 0.2]]);
        m.suppress(0, 0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.row_argmax(0), Some(1));
    }

    #[test]
    fn greedy_is_first_come_first_served() {
        // Trajectory 0 takes detection 0 even though trajectory 1 fits it better.
        let m = MatchMatrix::from_rows(&[[0.6, 0.95], [0.1, 0.2]]);
        assert_eq!(greedy_matches(&m, 0.5).det_to_traj, vec![Some(0), None]);
        assert_eq!(resolve_matches(&m, 0.5).det_to_traj, vec![Some(1), None]);
    }

    fn arb_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
            proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, c), r)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn assignment_is_injective_and_mutual(rows in arb_matrix(), theta in 0.05..0.95f64) {
            let m = MatchMatrix::from_rows(&rows);
            for a in [resolve_matches(&m, theta), greedy_matches(&m, theta)] {
                let mut used = vec![false; m.cols()];
                for (i, j) in a.pairs() {
                    prop_assert!(!used[j]);
                    used[j] = true;
                    prop_assert!(m.get(i, j) > theta);
                }
            }
        }

        #[test]
        fn permuting_detections_permutes_the_assignment(rows in arb_matrix(), seed in any::<u64>()) {
            let theta = 0.5;
            let n = rows.len();
            let mut perm: Vec<usize> = (0..n).collect();
            // Deterministic shuffle from the seed.
            let mut s = seed | 1;
            for k in (1..n).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                perm.swap(k, (s % (k as u64 + 1)) as usize);
            }
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
            let a = resolve_matches(&MatchMatrix::from_rows(&rows), theta);
            let b = resolve_matches(&MatchMatrix::from_rows(&shuffled), theta);
            for (new_i, &old_i) in perm.iter().enumerate() {
                prop_assert_eq!(b.det_to_traj[new_i], a.det_to_traj[old_i]);
            }
        }
    }
}
