//! Synthetic scenes, a noisy detector, an oracle tracker and quality metrics.
//!
//! Instances move with constant velocity, so tracking entries flanked by
//! detections can be checked against exact ground truth.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox, Point, Polygon, RotatedRect};
use crate::image::Image;
use crate::tmm::{
    mine_video, Detection, DetectionRecord, MatchingStrategy, MiningConfig, MiningOutput,
    TmmError, Trajectory, TrajectoryEntry, TrajectoryStore,
};
use crate::tracker::{Tracker, TrackingResult};
use crate::FrameIndex;

/// IoU at which an entry counts as belonging to a ground-truth instance.
pub const PURITY_IOU: f64 = 0.5;

/// Score reported by the oracle tracker.
pub const ORACLE_SCORE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("infeasible scene: {0}")]
    InfeasibleSpec(&'static str),
    #[error(transparent)]
    Mining(#[from] TmmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub n_instances: usize,
    pub n_frames: u32,
    /// Canvas width and height in pixels.
    pub canvas: [f64; 2],
    pub box_width: [f64; 2],
    pub box_height: [f64; 2],
    /// Largest horizontal speed in pixels per frame.
    pub max_speed: f64,
    /// Largest rotation speed in degrees per frame; zero keeps masks axis-aligned.
    pub max_angular_rate: f64,
    /// Make instances 0 and 1 pass through each other mid-sequence.
    pub crossing: bool,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_instances: 4,
            n_frames: 30,
            canvas: [640.0, 360.0],
            box_width: [60.0, 120.0],
            box_height: [20.0, 36.0],
            max_speed: 4.0,
            max_angular_rate: 0.0,
            crossing: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScoreModel {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel::Uniform { lo: 0.6, hi: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Chance that a ground-truth box is not detected in a frame.
    pub p_miss: f64,
    /// `(instance, frame)` pairs that are never detected.
    pub forced_dropouts: Vec<(usize, FrameIndex)>,
    /// Standard deviation of the box-corner noise, truncated at three sigma.
    pub jitter_sigma: f64,
    pub score: ScoreModel,
    /// Chance per frame of one spurious detection.
    pub p_false: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            p_miss: 0.0,
            forced_dropouts: Vec::new(),
            jitter_sigma: 0.0,
            score: ScoreModel::default(),
            p_false: 0.0,
        }
    }
}

/// Ground-truth location of an instance in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub rect: RotatedRect,
    pub bbox: BBox,
    pub mask: Polygon,
}

impl GtObject {
    pub fn from_rect(rect: RotatedRect) -> Result<Self, SimError> {
        let mask = Polygon::new(rect.corners().to_vec())
            .map_err(|_| SimError::InfeasibleSpec("degenerate instance"))?;
        let bbox = mask
            .bounds()
            .map_err(|_| SimError::InfeasibleSpec("degenerate instance"))?;
        Ok(Self { rect, bbox, mask })
    }
}

/// Per-instance, per-frame ground truth. `None` marks frames where an
/// instance is not in the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub canvas: [f64; 2],
    pub n_frames: u32,
    pub instances: Vec<Vec<Option<GtObject>>>,
}

impl GroundTruth {
    pub fn at(&self, instance: usize, frame: FrameIndex) -> Option<&GtObject> {
        self.instances.get(instance)?.get(frame as usize)?.as_ref()
    }

    pub fn objects_at(&self, frame: FrameIndex) -> impl Iterator<Item = (usize, &GtObject)> + '_ {
        self.instances
            .iter()
            .enumerate()
            .filter_map(move |(k, track)| track.get(frame as usize)?.as_ref().map(|o| (k, o)))
    }

    /// Instance overlapping `bbox` most in `frame`, if it reaches `min_iou`.
    pub fn best_instance(&self, frame: FrameIndex, bbox: &BBox, min_iou: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, o) in self.objects_at(frame) {
            let v = iou(bbox, &o.bbox);
            if v >= min_iou && best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        best.map(|(k, _)| k)
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] >= range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Generates constant-velocity instances, each in its own horizontal band.
/// With `crossing`, instances 0 and 1 share a band and meet mid-sequence.
pub fn generate_scene(spec: &SceneSpec) -> Result<GroundTruth, SimError> {
    let [cw, ch] = spec.canvas;
    if spec.n_frames == 0 || !(cw > 0.0 && ch > 0.0) {
        return Err(SimError::InfeasibleSpec("empty canvas or no frames"));
    }
    let ordered = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
    if !ordered(spec.box_width) || !ordered(spec.box_height) {
        return Err(SimError::InfeasibleSpec("box size ranges must be positive and ordered"));
    }
    if !(spec.max_speed >= 0.0 && spec.max_angular_rate >= 0.0) {
        return Err(SimError::InfeasibleSpec("speeds must be non-negative"));
    }
    let crossing = spec.crossing && spec.n_instances >= 2;
    let n_bands = if crossing { spec.n_instances - 1 } else { spec.n_instances };
    if n_bands == 0 {
        return Ok(GroundTruth {
            canvas: spec.canvas,
            n_frames: spec.n_frames,
            instances: Vec::new(),
        });
    }
    let band_h = ch / n_bands as f64;
    let rotating = spec.max_angular_rate > 0.0;
    // Half extents that bound the instance under any rotation.
    let extent = |w: f64, h: f64| {
        if rotating {
            let r = 0.5 * libm::hypot(w, h);
            (r, r)
        } else {
            (0.5 * w, 0.5 * h)
        }
    };
    let (max_rx, max_ry) = extent(spec.box_width[1], spec.box_height[1]);
    let crossing_gap = 0.1 * spec.box_height[1];
    let band_need = 2.0 * max_ry + if crossing { crossing_gap } else { 0.0 };
    if 2.0 * max_rx > cw || band_need > band_h {
        return Err(SimError::InfeasibleSpec("boxes do not fit the canvas"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let last = f64::from(spec.n_frames - 1);
    let mut instances = Vec::with_capacity(spec.n_instances);
    let mut pair_size = (0.0, 0.0);
    for k in 0..spec.n_instances {
        let band = if crossing { k.saturating_sub(1) } else { k };
        let (top, bottom) = (band as f64 * band_h, (band + 1) as f64 * band_h);
        let (mut w, mut h) = (uniform(&mut rng, spec.box_width), uniform(&mut rng, spec.box_height));
        let angle0 = if rotating { uniform(&mut rng, [-10.0, 10.0]) } else { 0.0 };
        let rate = uniform(&mut rng, [-spec.max_angular_rate, spec.max_angular_rate]);
        let u_start = uniform(&mut rng, [0.0, 1.0]);
        let u_y = uniform(&mut rng, [0.0, 1.0]);
        let vx = uniform(&mut rng, [-spec.max_speed, spec.max_speed]);
        let vy = uniform(&mut rng, [-0.25 * spec.max_speed, 0.25 * spec.max_speed]);

        let (start, end) = if crossing && k < 2 {
            if k == 0 {
                pair_size = (w, h);
            } else {
                (w, h) = pair_size;
            }
            let (rx, ry) = extent(w, h);
            let span = (spec.max_speed.max(0.5) * last).min(cw - 2.0 * rx);
            let cx = 0.5 * cw;
            let cy = 0.5 * (top + bottom) + if k == 0 { -0.5 } else { 0.5 } * 0.1 * h;
            debug_assert!(cy - ry >= top - 1e-9 && cy + ry <= bottom + 1e-9);
            let (a, b) = (cx - 0.5 * span, cx + 0.5 * span);
            if k == 0 {
                (Point::new(a, cy), Point::new(b, cy))
            } else {
                (Point::new(b, cy), Point::new(a, cy))
            }
        } else {
            let (rx, ry) = extent(w, h);
            let (xlo, xhi) = (rx, cw - rx);
            let (ylo, yhi) = (top + ry, bottom - ry);
            let start = Point::new(xlo + u_start * (xhi - xlo), ylo + u_y * (yhi - ylo));
            let end = Point::new(
                (start.x + vx * last).clamp(xlo, xhi),
                (start.y + vy * last).clamp(ylo, yhi),
            );
            (start, end)
        };

        let mut track = Vec::with_capacity(spec.n_frames as usize);
        for f in 0..spec.n_frames {
            let s = if last == 0.0 { 0.0 } else { f64::from(f) / last };
            let c = start.lerp(end, s);
            let rect = RotatedRect::new(c, w, h, angle0 + rate * f64::from(f));
            track.push(Some(GtObject::from_rect(rect)?));
        }
        instances.push(track);
    }
    Ok(GroundTruth {
        canvas: spec.canvas,
        n_frames: spec.n_frames,
        instances,
    })
}

/// Detector output plus the bookkeeping needed to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDetections {
    /// One record per frame that has at least one detection.
    pub records: Vec<DetectionRecord>,
    /// Ground-truth instance behind each detection; `None` for spurious ones.
    pub sources: BTreeMap<(FrameIndex, usize), Option<usize>>,
    /// `(instance, frame)` pairs that were not detected.
    pub dropouts: BTreeSet<(usize, FrameIndex)>,
}

impl SimDetections {
    pub fn by_frame(&self) -> BTreeMap<FrameIndex, Vec<Detection>> {
        self.records
            .iter()
            .map(|r| (r.frame_index, r.detections.clone()))
            .collect()
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 3.0 * sigma {
            return v;
        }
    }
}

/// Maps `mask` from the box `from` onto the box `to` axis by axis.
fn refit_mask(mask: &Polygon, from: &BBox, to: &BBox) -> Polygon {
    let sx = to.width() / from.width();
    let sy = to.height() / from.height();
    mask.map_points(|p| {
        Point::new(
            to.x1() + (p.x - from.x1()) * sx,
            to.y1() + (p.y - from.y1()) * sy,
        )
    })
}

/// Runs the simulated detector over a scene.
///
/// Every ground-truth box is dropped with probability `p_miss` or when listed
/// in `forced_dropouts`; survivors get truncated Gaussian corner noise and a
/// score from the score model.
pub fn simulate_detector(
    gt: &GroundTruth,
    noise: &NoiseSpec,
    video_id: &str,
    seed: u64,
) -> SimDetections {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forced: BTreeSet<(usize, FrameIndex)> = noise.forced_dropouts.iter().copied().collect();
    let mut out = SimDetections {
        records: Vec::new(),
        sources: BTreeMap::new(),
        dropouts: BTreeSet::new(),
    };
    let [cw, ch] = gt.canvas;
    for f in 0..gt.n_frames {
        let mut dets = Vec::new();
        for (k, obj) in gt.objects_at(f) {
            let u: f64 = rng.random();
            let jitter: [f64; 4] = core::array::from_fn(|_| truncated_normal(&mut rng, noise.jitter_sigma));
            let score = draw_score(&mut rng, noise.score);
            if forced.contains(&(k, f)) || u < noise.p_miss {
                out.dropouts.insert((k, f));
                continue;
            }
            let b = obj.bbox;
            let (bbox, polygon) = match BBox::new(
                b.x1() + jitter[0],
                b.y1() + jitter[1],
                b.x2() + jitter[2],
                b.y2() + jitter[3],
            ) {
                Ok(j) if jitter != [0.0; 4] => (j, refit_mask(&obj.mask, &b, &j)),
                _ => (b, obj.mask.clone()),
            };
            out.sources.insert((f, dets.len()), Some(k));
            dets.push(Detection {
                bbox,
                polygon,
                score,
            });
        }
        let spurious: f64 = rng.random();
        let (ux, uy, uw, uh) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
        let score = draw_score(&mut rng, noise.score);
        if spurious < noise.p_false {
            let w = 20.0 + 60.0 * uw;
            let h = 10.0 + 20.0 * uh;
            let x = ux * (cw - w).max(0.0);
            let y = uy * (ch - h).max(0.0);
            if let Ok(bbox) = BBox::from_xywh(x, y, w, h) {
                out.sources.insert((f, dets.len()), None);
                dets.push(Detection {
                    bbox,
                    polygon: Polygon::from(&bbox),
                    score,
                });
            }
        }
        if !dets.is_empty() {
            out.records.push(DetectionRecord {
                video_id: String::from(video_id),
                frame_index: f,
                detections: dets,
            });
        }
    }
    out
}

fn draw_score(rng: &mut ChaCha8Rng, model: ScoreModel) -> f64 {
    let u: f64 = rng.random();
    match model {
        ScoreModel::Constant { value } => value,
        ScoreModel::Uniform { lo, hi } => lo + u * (hi - lo),
    }
    .clamp(0.0, 1.0)
}

/// Tracker that reads positions from ground truth instead of pixels.
///
/// The instance is identified by the best IoU between the last entry and
/// ground truth at the entry's frame; its true box in the new frame is
/// returned, optionally with truncated Gaussian corner noise.
#[derive(Debug, Clone, Copy)]
pub struct OracleTracker<'a> {
    pub gt: &'a GroundTruth,
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl<'a> OracleTracker<'a> {
    pub fn new(gt: &'a GroundTruth) -> Self {
        Self {
            gt,
            jitter_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Oracle tracking step; see [`OracleTracker`].
pub fn oracle_track(
    gt: &GroundTruth,
    last: &TrajectoryEntry,
    frame: FrameIndex,
    jitter_sigma: f64,
    seed: u64,
) -> Option<TrackingResult> {
    let k = gt.best_instance(last.frame, &last.bbox, f64::MIN_POSITIVE)?;
    let target = gt.at(k, frame)?.bbox;
    let bbox = if jitter_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((u64::from(frame) << 32) | k as u64);
        let j: [f64; 4] = core::array::from_fn(|_| truncated_normal(&mut rng, jitter_sigma));
        BBox::new(
            target.x1() + j[0],
            target.y1() + j[1],
            target.x2() + j[2],
            target.y2() + j[3],
        )
        .unwrap_or(target)
    } else {
        target
    };
    Some(TrackingResult {
        bbox,
        score: ORACLE_SCORE,
    })
}

impl Tracker for OracleTracker<'_> {
    type Frame = FrameIndex;
    type Template = ();

    fn track(&self, last: &TrajectoryEntry, _: Option<&()>, frame: &FrameIndex) -> Option<TrackingResult> {
        oracle_track(self.gt, last, *frame, self.jitter_sigma, self.seed)
    }

    fn refresh_template(&self, _: Option<()>, _: &TrajectoryEntry, _: &FrameIndex) -> Option<()> {
        Some(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub purity: f64,
    pub hp_precision: f64,
    pub hp_recall: f64,
    pub hn_precision: f64,
    pub pseudo_noise_rate: f64,
}

/// Dropouts a perfect miner should recover: runs of at most `max_gap` missed
/// frames with `n_ctx` detected frames directly on each side.
pub fn flanked_dropouts(
    gt: &GroundTruth,
    dropouts: &BTreeSet<(usize, FrameIndex)>,
    cfg: &MiningConfig,
) -> BTreeSet<(usize, FrameIndex)> {
    let mut out = BTreeSet::new();
    let n_ctx = cfg.n_ctx.max(1) as i64;
    for k in 0..gt.instances.len() {
        let detected = |f: i64| {
            f >= 0
                && f < i64::from(gt.n_frames)
                && gt.at(k, f as FrameIndex).is_some()
                && !dropouts.contains(&(k, f as FrameIndex))
        };
        let mut f: i64 = 0;
        while f < i64::from(gt.n_frames) {
            if !dropouts.contains(&(k, f as FrameIndex)) {
                f += 1;
                continue;
            }
            let start = f;
            while f + 1 < i64::from(gt.n_frames) && dropouts.contains(&(k, (f + 1) as FrameIndex)) {
                f += 1;
            }
            let end = f;
            f += 1;
            let run = (end - start + 1) as usize;
            let before = (1..=n_ctx).all(|d| detected(start - d));
            let after = (1..=n_ctx).all(|d| detected(end + d));
            if run <= cfg.max_gap && before && after {
                out.extend((start..=end).map(|g| (k, g as FrameIndex)));
            }
        }
    }
    out
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Scores trajectories and mined examples against ground truth.
///
/// Empty denominators count as perfect: precision and recall are 1 with
/// nothing to judge, and the noise rate is 0 with no labels.
pub fn evaluate(
    trajectories: &[Trajectory],
    mining: &MiningOutput,
    gt: &GroundTruth,
    dropouts: &BTreeSet<(usize, FrameIndex)>,
    cfg: &MiningConfig,
) -> Metrics {
    let purity = if trajectories.is_empty() {
        1.0
    } else {
        trajectories.iter().map(|t| trajectory_purity(t, gt)).sum::<f64>() / trajectories.len() as f64
    };

    let hp_hits: BTreeSet<(usize, FrameIndex)> = mining
        .hard_positives
        .iter()
        .filter_map(|m| {
            gt.best_instance(m.entry.frame, &m.entry.bbox, PURITY_IOU)
                .map(|k| (k, m.entry.frame))
        })
        .collect();
    let true_hp = mining
        .hard_positives
        .iter()
        .filter(|m| {
            gt.best_instance(m.entry.frame, &m.entry.bbox, PURITY_IOU)
                .is_some_and(|k| dropouts.contains(&(k, m.entry.frame)))
        })
        .count();
    let flanked = flanked_dropouts(gt, dropouts, cfg);
    let recovered = flanked.iter().filter(|d| hp_hits.contains(d)).count();

    let spurious_hn = mining
        .hard_negatives
        .iter()
        .filter(|m| gt.best_instance(m.entry.frame, &m.entry.bbox, PURITY_IOU).is_none())
        .count();

    let labels: Vec<(FrameIndex, &BBox)> = mining
        .frames
        .iter()
        .flat_map(|f| f.labels.iter().map(move |l| (f.frame, &l.bbox)))
        .collect();
    let noisy = labels
        .iter()
        .filter(|(f, b)| gt.best_instance(*f, b, PURITY_IOU).is_none())
        .count();

    Metrics {
        purity,
        hp_precision: ratio(true_hp, mining.hard_positives.len(), 1.0),
        hp_recall: ratio(recovered, flanked.len(), 1.0),
        hn_precision: ratio(spurious_hn, mining.hard_negatives.len(), 1.0),
        pseudo_noise_rate: ratio(noisy, labels.len(), 0.0),
    }
}

/// Share of a trajectory's entries that belong to its majority instance.
pub fn trajectory_purity(t: &Trajectory, gt: &GroundTruth) -> f64 {
    if t.is_empty() {
        return 1.0;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in t.entries() {
        if let Some(k) = gt.best_instance(e.frame, &e.bbox, PURITY_IOU) {
            *counts.entry(k).or_default() += 1;
        }
    }
    let majority = counts.values().copied().max().unwrap_or(0);
    majority as f64 / t.len() as f64
}

/// Everything produced by one simulated mining run.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub gt: GroundTruth,
    pub detections: SimDetections,
    pub trajectories: Vec<Trajectory>,
    pub mining: MiningOutput,
    pub metrics: Metrics,
}

/// Generates a scene, detects it, builds trajectories with the oracle tracker
/// and mines it.
pub fn run_scenario(
    scene: &SceneSpec,
    noise: &NoiseSpec,
    cfg: &MiningConfig,
    strategy: MatchingStrategy,
) -> Result<ScenarioOutcome, SimError> {
    cfg.validate()?;
    let gt = generate_scene(scene)?;
    let detections = simulate_detector(&gt, noise, "sim", scene.seed);
    let trajectories = build_trajectories(&gt, &detections, cfg, strategy)?;
    let mining = mine_video(&trajectories, &detections.by_frame(), cfg);
    let metrics = evaluate(&trajectories, &mining, &gt, &detections.dropouts, cfg);
    Ok(ScenarioOutcome {
        gt,
        detections,
        trajectories,
        mining,
        metrics,
    })
}

/// Steps every frame of the scene through a trajectory store driven by the
/// oracle tracker.
pub fn build_trajectories(
    gt: &GroundTruth,
    detections: &SimDetections,
    cfg: &MiningConfig,
    strategy: MatchingStrategy,
) -> Result<Vec<Trajectory>, SimError> {
    let tracker = OracleTracker::new(gt);
    let by_frame = detections.by_frame();
    let mut store = TrajectoryStore::new(*cfg, strategy);
    let none = Vec::new();
    for f in 0..gt.n_frames {
        let dets = by_frame.get(&f).unwrap_or(&none);
        store.step_frame(f, &f, dets, &tracker)?;
    }
    Ok(store.finish())
}

/// Draws scenes as gray frames: a blocky static background with each instance
/// painted in its own blocky texture that moves with it.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    width: u32,
    height: u32,
    background: Image,
    textures: Vec<Vec<u8>>,
}

const TEXTURE_CELL: f64 = 4.0;
const TEXTURE_CELLS: usize = 64;

impl SceneRenderer {
    pub fn new(gt: &GroundTruth, seed: u64) -> Self {
        let width = libm::ceil(gt.canvas[0]) as u32;
        let height = libm::ceil(gt.canvas[1]) as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
        let (bw, bh) = (width.div_ceil(8), height.div_ceil(8));
        let blocks: Vec<u8> = (0..bw * bh).map(|_| rng.random_range(96..=160)).collect();
        let mut background = Image::filled(width, height, 1, 0);
        for y in 0..height {
            for x in 0..width {
                background.pixel_mut(x, y)[0] = blocks[((y / 8) * bw + x / 8) as usize];
            }
        }
        let textures = (0..gt.instances.len())
            .map(|_| (0..TEXTURE_CELLS * TEXTURE_CELLS).map(|_| rng.random()).collect())
            .collect();
        Self {
            width,
            height,
            background,
            textures,
        }
    }

    pub fn render(&self, gt: &GroundTruth, frame: FrameIndex) -> Image {
        let mut img = self.background.clone();
        for (k, obj) in gt.objects_at(frame) {
            let Some(tex) = self.textures.get(k) else {
                continue;
            };
            let Some(area) = obj.bbox.clip(f64::from(self.width), f64::from(self.height)) else {
                continue;
            };
            let rad = obj.rect.angle.to_radians();
            let (s, c) = (libm::sin(rad), libm::cos(rad));
            let (hw, hh) = (0.5 * obj.rect.width, 0.5 * obj.rect.height);
            let x0 = libm::floor(area.x1()) as u32;
            let y0 = libm::floor(area.y1()) as u32;
            let x1 = (libm::ceil(area.x2()) as u32).min(self.width);
            let y1 = (libm::ceil(area.y2()) as u32).min(self.height);
            for y in y0..y1 {
                for x in x0..x1 {
                    let dx = f64::from(x) + 0.5 - obj.rect.center.x;
                    let dy = f64::from(y) + 0.5 - obj.rect.center.y;
                    let u = dx * c + dy * s + hw;
                    let v = -dx * s + dy * c + hh;
                    if u < 0.0 || v < 0.0 || u >= 2.0 * hw || v >= 2.0 * hh {
                        continue;
                    }
                    let cu = ((u / TEXTURE_CELL) as usize).min(TEXTURE_CELLS - 1);
                    let cv = ((v / TEXTURE_CELL) as usize).min(TEXTURE_CELLS - 1);
                    img.pixel_mut(x, y)[0] = tex[cv * TEXTURE_CELLS + cu];
                }
            }
        }
        img
    }
}
