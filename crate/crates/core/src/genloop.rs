//! Synthetic videos from still images.
//!
//! A random end transform is sampled per image and intermediate frames are
//! interpolated between the identity and that transform. The loop schedule
//! walks start -> end -> start -> end so every frame is seen at least twice
//! with neighbours on both sides, while only the unique frames need to go
//! through the detector.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{lerp_affine, warp_image, AffineParams, Point};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenLoopError {
    #[error("schedule of length {len} exceeds the cap of {cap} frames")]
    ScheduleTooLong { len: usize, cap: usize },
    #[error("invalid loop spec: {0}")]
    InvalidSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopMode {
    /// The untouched image.
    Base,
    /// The image under the sampled end transform.
    BaseTrans,
    /// Start to end once.
    #[serde(rename = "straight")]
    GenStraight,
    /// Start to end, back to start, and to end again.
    #[default]
    #[serde(rename = "loop")]
    GenLoop,
}

/// How the transform center is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CenterPolicy {
    /// Image center moved uniformly by up to `jitter` of the width/height.
    Jittered { jitter: f64 },
    Fixed { x: f64, y: f64 },
}

impl Default for CenterPolicy {
    fn default() -> Self {
        CenterPolicy::Jittered { jitter: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSpec {
    pub mode: LoopMode,
    /// Distinct interpolated frames for the straight and loop modes.
    pub n_unique: usize,
    /// Longest video that may be emitted.
    pub t_cap: usize,
    /// Rotation range in degrees.
    pub theta_rot: [f64; 2],
    /// Scale range; sampled log-uniformly.
    pub delta: [f64; 2],
    pub center: CenterPolicy,
    /// Largest translation, in pixels, along each axis.
    pub max_translation: f64,
    pub seed: u64,
}

impl Default for LoopSpec {
    fn default() -> Self {
        Self {
            mode: LoopMode::GenLoop,
            n_unique: 17,
            t_cap: 50,
            theta_rot: [-15.0, 15.0],
            delta: [0.8, 1.25],
            center: CenterPolicy::default(),
            max_translation: 0.0,
            seed: 0,
        }
    }
}

impl LoopSpec {
    pub fn validate(&self) -> Result<(), GenLoopError> {
        let [t0, t1] = self.theta_rot;
        let [d0, d1] = self.delta;
        if !(t0.is_finite() && t1.is_finite() && t0 <= t1) {
            return Err(GenLoopError::InvalidSpec("rotation range must be finite and ordered"));
        }
        if !(d0 > 0.0 && d1.is_finite() && d0 <= d1) {
            return Err(GenLoopError::InvalidSpec("scale range must be positive and ordered"));
        }
        if !(self.max_translation >= 0.0 && self.max_translation.is_finite()) {
            return Err(GenLoopError::InvalidSpec("max_translation must be >= 0"));
        }
        if let CenterPolicy::Jittered { jitter } = self.center {
            if !(0.0..=1.0).contains(&jitter) {
                return Err(GenLoopError::InvalidSpec("center jitter must lie in [0, 1]"));
            }
        }
        if matches!(self.mode, LoopMode::GenStraight | LoopMode::GenLoop) && self.n_unique < 2 {
            return Err(GenLoopError::InvalidSpec("n_unique must be >= 2"));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + u * (hi - lo)
}

/// Samples the end transform for an image of the given size.
///
/// The rng is always advanced by the same number of draws, whatever the ranges.
pub fn sample_transform<R: Rng + ?Sized>(
    spec: &LoopSpec,
    image_size: (u32, u32),
    rng: &mut R,
) -> AffineParams {
    let theta = uniform(rng, spec.theta_rot[0], spec.theta_rot[1]);
    let log_delta = uniform(rng, libm::log(spec.delta[0]), libm::log(spec.delta[1]));
    let delta = if spec.delta[0] == spec.delta[1] {
        spec.delta[0]
    } else {
        libm::exp(log_delta).clamp(spec.delta[0], spec.delta[1])
    };
    let (w, h) = (f64::from(image_size.0), f64::from(image_size.1));
    let jx = uniform(rng, -1.0, 1.0);
    let jy = uniform(rng, -1.0, 1.0);
    let center = match spec.center {
        CenterPolicy::Jittered { jitter } => {
            Point::new(0.5 * w + jx * jitter * w, 0.5 * h + jy * jitter * h)
        }
        CenterPolicy::Fixed { x, y } => Point::new(x, y),
    };
    let m = spec.max_translation;
    let translation = Point::new(uniform(rng, -m, m), uniform(rng, -m, m));
    AffineParams {
        theta_rot: theta,
        delta,
        center,
        translation,
    }
}

/// Emitted video positions mapped to unique frame indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSchedule {
    positions: Vec<usize>,
    n_unique: usize,
}

impl FrameSchedule {
    /// Wraps a position list; every index below `n_unique` must occur.
    pub fn from_positions(positions: Vec<usize>) -> Option<Self> {
        let n_unique = positions.iter().max().map_or(0, |m| m + 1);
        let mut seen = alloc::vec![false; n_unique];
        positions.iter().for_each(|&p| seen[p] = true);
        seen.iter().all(|s| *s).then_some(Self { positions, n_unique })
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_unique(&self) -> usize {
        self.n_unique
    }

    /// Unique frame shown at emitted position `p`.
    pub fn unique_at(&self, p: usize) -> Option<usize> {
        self.positions.get(p).copied()
    }

    /// Emitted positions that show unique frame `k`.
    pub fn occurrences(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter_map(move |(p, &u)| (u == k).then_some(p))
    }
}

/// Builds the emitted-position schedule for a mode.
///
/// The loop shares its turning frames between passes, so `n` unique frames
/// give `3n - 2` positions: `0..n`, then `n-2` down to `0`, then `1..n`.
pub fn build_frame_schedule(spec: &LoopSpec) -> Result<FrameSchedule, GenLoopError> {
    let n = spec.n_unique;
    let positions: Vec<usize> = match spec.mode {
        LoopMode::Base | LoopMode::BaseTrans => alloc::vec![0],
        LoopMode::GenStraight => {
            if n < 2 {
                return Err(GenLoopError::InvalidSpec("n_unique must be >= 2"));
            }
            (0..n).collect()
        }
        LoopMode::GenLoop => {
            if n < 2 {
                return Err(GenLoopError::InvalidSpec("n_unique must be >= 2"));
            }
            (0..n).chain((0..n - 1).rev()).chain(1..n).collect()
        }
    };
    if positions.len() > spec.t_cap {
        return Err(GenLoopError::ScheduleTooLong {
            len: positions.len(),
            cap: spec.t_cap,
        });
    }
    Ok(FrameSchedule {
        positions,
        n_unique: if matches!(spec.mode, LoopMode::Base | LoopMode::BaseTrans) {
            1
        } else {
            n
        },
    })
}

/// Unique frames of a synthetic video plus the schedule that replays them.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedVideo {
    pub unique_frames: Vec<Image>,
    pub schedule: FrameSchedule,
    /// Transform applied to each unique frame, in order.
    pub transforms: Vec<AffineParams>,
}

impl RenderedVideo {
    /// Frame at emitted position `p`.
    pub fn emitted(&self, p: usize) -> Option<&Image> {
        self.unique_frames.get(self.schedule.unique_at(p)?)
    }
}

/// Transform of unique frame `k` out of `n` for the given mode.
pub fn unique_transform(mode: LoopMode, end: &AffineParams, k: usize, n: usize) -> AffineParams {
    let start = AffineParams::identity(end.center);
    match mode {
        LoopMode::Base => start,
        LoopMode::BaseTrans => *end,
        LoopMode::GenStraight | LoopMode::GenLoop => {
            if n < 2 {
                start
            } else {
                lerp_affine(&start, end, k as f64 / (n - 1) as f64)
            }
        }
    }
}

/// Renders the unique frames of a schedule. Frame `k` is the image under the
/// transform interpolated `k / (n - 1)` of the way from identity to `end`.
pub fn render_frames(
    image: &Image,
    mode: LoopMode,
    end: &AffineParams,
    schedule: &FrameSchedule,
) -> RenderedVideo {
    let n = schedule.n_unique();
    let transforms: Vec<AffineParams> = (0..n).map(|k| unique_transform(mode, end, k, n)).collect();
    let unique_frames = transforms
        .iter()
        .map(|t| {
            if t.is_identity() {
                image.clone()
            } else {
                warp_image(image, t, image.width(), image.height())
            }
        })
        .collect();
    RenderedVideo {
        unique_frames,
        schedule: schedule.clone(),
        transforms,
    }
}
