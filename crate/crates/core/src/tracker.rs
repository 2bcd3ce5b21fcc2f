//! Template-matching tracker behind a pluggable tracker interface.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::image::Image;
use crate::tmm::{EntryKind, TrajectoryEntry};
use crate::FrameIndex;

/// Smallest padding, in pixels, added around the last box when searching.
pub const MIN_SEARCH_PAD: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackError {
    #[error("patch has no usable area inside the frame")]
    EmptyPatch,
    #[error("template or every candidate window has zero variance")]
    ZeroVariance,
    #[error("search region is smaller than the template")]
    SearchTooSmall,
}

/// Something that proposes where a trajectory's instance sits in a new frame.
///
/// Implementations must be deterministic for fixed inputs.
pub trait Tracker {
    type Frame: ?Sized;
    /// Appearance state carried alongside each live trajectory.
    type Template;

    /// Proposes a location for the instance last seen at `last`.
    fn track(
        &self,
        last: &TrajectoryEntry,
        template: Option<&Self::Template>,
        frame: &Self::Frame,
    ) -> Option<TrackingResult>;

    /// Called after `entry` has been appended for `frame`; returns the
    /// template to use from now on.
    fn refresh_template(
        &self,
        current: Option<Self::Template>,
        entry: &TrajectoryEntry,
        frame: &Self::Frame,
    ) -> Option<Self::Template>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingResult {
    pub bbox: BBox,
    /// Peak correlation in `[-1, 1]`.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Search padding on each side, as a multiple of the box width/height.
    pub margin: f64,
    /// Minimum peak correlation for a tracking result to count.
    pub tau_track: f64,
    /// Frames after which a template taken from a detection is replaced by
    /// the latest tracked appearance.
    pub max_template_age: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            tau_track: 0.6,
            max_template_age: 8,
        }
    }
}

/// Grayscale crop with the integer pixel box it was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    origin: BBox,
}

impl Patch {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> &BBox {
        &self.origin
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Integer pixel span `[lo, hi)` of a box clipped to the frame.
fn pixel_span(bbox: &BBox, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let clamp = |v: f64, max: u32| libm::round(v).clamp(0.0, f64::from(max)) as u32;
    let x0 = clamp(bbox.x1(), width);
    let x1 = clamp(bbox.x2(), width);
    let y0 = clamp(bbox.y1(), height);
    let y1 = clamp(bbox.y2(), height);
    (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
}

/// Crops the part of `bbox` inside `frame` (rounded to whole pixels) as luma.
pub fn extract_patch(frame: &Image, bbox: &BBox) -> Result<Patch, TrackError> {
    let (x0, y0, x1, y1) =
        pixel_span(bbox, frame.width(), frame.height()).ok_or(TrackError::EmptyPatch)?;
    let (w, h) = ((x1 - x0) as usize, (y1 - y0) as usize);
    if w < 2 || h < 2 {
        return Err(TrackError::EmptyPatch);
    }
    let mut pixels = Vec::with_capacity(w * h);
    for y in y0..y1 {
        for x in x0..x1 {
            pixels.push(frame.luma(x, y));
        }
    }
    let origin = BBox::new(f64::from(x0), f64::from(y0), f64::from(x1), f64::from(y1))
        .map_err(|_| TrackError::EmptyPatch)?;
    Ok(Patch {
        width: w,
        height: h,
        pixels,
        origin,
    })
}

/// Zero-normalized cross-correlation search of `template` over `search`.
///
/// Every placement of the template fully inside the (frame-clipped) search
/// region is scored; the best score wins, the smallest `(y, x)` offset on
/// ties. Windows with zero variance are skipped.
pub fn ncc_match(template: &Patch, frame: &Image, search: &BBox) -> Result<(BBox, f64), TrackError> {
    let (sx0, sy0, sx1, sy1) =
        pixel_span(search, frame.width(), frame.height()).ok_or(TrackError::SearchTooSmall)?;
    let (tw, th) = (template.width, template.height);
    if ((sx1 - sx0) as usize) < tw || ((sy1 - sy0) as usize) < th {
        return Err(TrackError::SearchTooSmall);
    }
    let n = (tw * th) as f64;
    let t_mean = template.pixels.iter().sum::<f64>() / n;
    let centered: Vec<f64> = template.pixels.iter().map(|v| v - t_mean).collect();
    let t_energy: f64 = centered.iter().map(|v| v * v).sum();
    if t_energy <= 1e-12 * n {
        return Err(TrackError::ZeroVariance);
    }

    // Luma of the search region, computed once.
    let (sw, sh) = ((sx1 - sx0) as usize, (sy1 - sy0) as usize);
    let mut region = Vec::with_capacity(sw * sh);
    for y in sy0..sy1 {
        for x in sx0..sx1 {
            region.push(frame.luma(x, y));
        }
    }

    let mut best: Option<(usize, usize, f64)> = None;
    for oy in 0..=(sh - th) {
        for ox in 0..=(sw - tw) {
            let (mut sum, mut sum_sq, mut cross) = (0.0, 0.0, 0.0);
            for ty in 0..th {
                let row = &region[(oy + ty) * sw + ox..(oy + ty) * sw + ox + tw];
                let trow = &centered[ty * tw..(ty + 1) * tw];
                for (w, t) in row.iter().zip(trow) {
                    sum += w;
                    sum_sq += w * w;
                    cross += t * w;
                }
            }
            let w_energy = sum_sq - sum * sum / n;
            if w_energy <= 1e-9 * sum_sq.max(1.0) {
                continue;
            }
            let score = (cross / libm::sqrt(t_energy * w_energy)).clamp(-1.0, 1.0);
            if best.is_none_or(|(_, _, b)| score > b) {
                best = Some((ox, oy, score));
            }
        }
    }
    let (ox, oy, score) = best.ok_or(TrackError::ZeroVariance)?;
    let x = f64::from(sx0) + ox as f64;
    let y = f64::from(sy0) + oy as f64;
    let bbox = BBox::new(x, y, x + tw as f64, y + th as f64).map_err(|_| TrackError::EmptyPatch)?;
    Ok((bbox, score))
}

/// Appearance template plus the frame it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub patch: Patch,
    pub frame: FrameIndex,
}

/// NCC template-matching tracker over RGB or gray frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TemplateTracker {
    pub config: TrackerConfig,
}

impl TemplateTracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self { config }
    }

    /// Region searched around `last`: padded by `margin` times its size on
    /// every side, at least [`MIN_SEARCH_PAD`] pixels.
    pub fn search_region(&self, last: &BBox) -> Option<BBox> {
        let pad_x = (self.config.margin * last.width()).max(MIN_SEARCH_PAD);
        let pad_y = (self.config.margin * last.height()).max(MIN_SEARCH_PAD);
        last.expand(pad_x, pad_y).ok()
    }

    pub fn track_patch(&self, last: &BBox, template: &Patch, frame: &Image) -> Option<TrackingResult> {
        let search = self
            .search_region(last)?
            .clip(f64::from(frame.width()), f64::from(frame.height()))?;
        let (bbox, score) = ncc_match(template, frame, &search).ok()?;
        (score >= self.config.tau_track).then_some(TrackingResult { bbox, score })
    }
}

impl Tracker for TemplateTracker {
    type Frame = Image;
    type Template = Template;

    fn track(
        &self,
        last: &TrajectoryEntry,
        template: Option<&Template>,
        frame: &Image,
    ) -> Option<TrackingResult> {
        self.track_patch(&last.bbox, &template?.patch, frame)
    }

    /// Detection entries always replace the template. Tracking entries only
    /// replace one that is older than `max_template_age` frames.
    fn refresh_template(
        &self,
        current: Option<Template>,
        entry: &TrajectoryEntry,
        frame: &Image,
    ) -> Option<Template> {
        let stale = match (&current, entry.kind) {
            (_, EntryKind::Detection) | (None, _) => true,
            (Some(t), EntryKind::Tracking) => {
                entry.frame.saturating_sub(t.frame) > self.config.max_template_age
            }
        };
        if !stale {
            return current;
        }
        match extract_patch(frame, &entry.bbox) {
            Ok(patch) => Some(Template {
                patch,
                frame: entry.frame,
            }),
            Err(_) => current,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tmm::EntryKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h).map(|_| rng.random::<u8>()).collect();
        Image::from_raw(w, h, 1, data).unwrap()
    }

    #[allow(clippy::too_many_arguments)]
    fn paste(dst: &mut Image, src: &Image, sx: u32, sy: u32, w: u32, h: u32, dx: u32, dy: u32) {
        for y in 0..h {
            for x in 0..w {
                let v = src.pixel(sx + x, sy + y)[0];
                dst.pixel_mut(dx + x, dy + y)[0] = v;
            }
        }
    }

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn patch_extraction_and_clipping() {
        let img = noise_image(64, 48, 1);
        let p = extract_patch(&img, &bx(10.0, 10.0, 30.0, 20.0)).unwrap();
        assert_eq!((p.width(), p.height()), (20, 10));
        let clipped = extract_patch(&img, &bx(54.0, 10.0, 74.0, 20.0)).unwrap();
        assert_eq!((clipped.width(), clipped.height()), (10, 10));
        assert_eq!(
            extract_patch(&img, &bx(100.0, 10.0, 120.0, 20.0)),
            Err(TrackError::EmptyPatch)
        );
    }

    #[test]
    fn exact_copy_is_found_at_its_offset() {
        let img = noise_image(64, 64, 2);
        let tpl = extract_patch(&img, &bx(20.0, 20.0, 36.0, 30.0)).unwrap();
        let mut frame = noise_image(64, 64, 3);
        paste(&mut frame, &img, 20, 20, 16, 10, 23, 24);
        let (b, score) = ncc_match(&tpl, &frame, &bx(4.0, 4.0, 60.0, 60.0)).unwrap();
        assert_eq!(b, bx(23.0, 24.0, 39.0, 34.0));
        assert!((score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_frame_has_zero_variance() {
        let img = noise_image(32, 32, 4);
        let tpl = extract_patch(&img, &bx(4.0, 4.0, 12.0, 12.0)).unwrap();
        let flat = Image::filled(32, 32, 1, 90);
        assert_eq!(
            ncc_match(&tpl, &flat, &bx(0.0, 0.0, 32.0, 32.0)),
            Err(TrackError::ZeroVariance)
        );
        let flat_tpl = extract_patch(&flat, &bx(4.0, 4.0, 12.0, 12.0)).unwrap();
        assert_eq!(
            ncc_match(&flat_tpl, &img, &bx(0.0, 0.0, 32.0, 32.0)),
            Err(TrackError::ZeroVariance)
        );
    }

    #[test]
    fn positive_affine_intensity_change_keeps_the_peak() {
        // Even values up to 150 keep 1.5 * v + 10 integral and below 255.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<u8> = (0..48 * 48).map(|_| 2 * rng.random_range(0..=75u8)).collect();
        let img = Image::from_raw(48, 48, 1, base.clone()).unwrap();
        let brighter =
            Image::from_raw(48, 48, 1, base.iter().map(|&v| v / 2 * 3 + 10).collect()).unwrap();
        let tpl = extract_patch(&img, &bx(12.0, 14.0, 26.0, 24.0)).unwrap();
        let (b, score) = ncc_match(&tpl, &brighter, &bx(0.0, 0.0, 48.0, 48.0)).unwrap();
        assert_eq!(b, bx(12.0, 14.0, 26.0, 24.0));
        assert!((score - 1.0).abs() < 1e-9, "score {score}");
    }

    fn entry(b: BBox) -> TrajectoryEntry {
        TrajectoryEntry {
            frame: 0,
            bbox: b,
            mask: None,
            kind: EntryKind::Detection,
            score: 1.0,
            det_index: Some(0),
        }
    }

    #[test]
    fn tracks_translation() {
        let frame0 = noise_image(96, 96, 6);
        let b0 = bx(40.0, 40.0, 60.0, 52.0);
        let mut frame1 = noise_image(96, 96, 7);
        paste(&mut frame1, &frame0, 40, 40, 20, 12, 43, 44);
        let tracker = TemplateTracker::default();
        let e = entry(b0);
        let tpl = tracker.refresh_template(None, &e, &frame0).unwrap();
        let r = tracker.track(&e, Some(&tpl), &frame1).unwrap();
        assert_eq!(r.bbox, b0.translate(3.0, 4.0));
        assert!((r.score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_instance_gives_no_result() {
        let frame0 = noise_image(96, 96, 8);
        let frame1 = noise_image(96, 96, 9);
        let tracker = TemplateTracker::default();
        let e = entry(bx(40.0, 40.0, 60.0, 52.0));
        let tpl = tracker.refresh_template(None, &e, &frame0).unwrap();
        // Independent noise: brute-force the best correlation over the search
        // window, which must stay under the 0.6 acceptance threshold.
        let search = tracker.search_region(&e.bbox).unwrap().clip(96.0, 96.0).unwrap();
        let (_, peak) = ncc_match(&tpl.patch, &frame1, &search).unwrap();
        assert!(peak < 0.6);
        assert!(tracker.track(&e, Some(&tpl), &frame1).is_none());
    }

    #[test]
    fn box_at_the_edge_stays_in_bounds() {
        let frame0 = noise_image(64, 64, 10);
        let b0 = bx(0.0, 0.0, 16.0, 10.0);
        let mut frame1 = noise_image(64, 64, 11);
        paste(&mut frame1, &frame0, 0, 0, 16, 10, 1, 0);
        let tracker = TemplateTracker::default();
        let e = entry(b0);
        let tpl = tracker.refresh_template(None, &e, &frame0).unwrap();
        let r = tracker.track(&e, Some(&tpl), &frame1).unwrap();
        assert_eq!(r.bbox, b0.translate(1.0, 0.0));
        assert!(r.bbox.x1() >= 0.0 && r.bbox.y1() >= 0.0);
    }

    #[test]
    fn tracking_entries_keep_fresh_detection_templates() {
        let frame = noise_image(64, 64, 12);
        let tracker = TemplateTracker::default();
        let det = entry(bx(10.0, 10.0, 30.0, 20.0));
        let tpl = tracker.refresh_template(None, &det, &frame).unwrap();
        let mut tracked = det.clone();
        tracked.kind = EntryKind::Tracking;
        tracked.frame = 3;
        tracked.bbox = bx(20.0, 20.0, 40.0, 30.0);
        let kept = tracker.refresh_template(Some(tpl.clone()), &tracked, &frame).unwrap();
        assert_eq!(kept, tpl);
        tracked.frame = 20;
        let replaced = tracker.refresh_template(Some(tpl.clone()), &tracked, &frame).unwrap();
        assert_eq!(replaced.frame, 20);
    }

    #[test]
    fn tracking_is_translation_covariant() {
        let frame0 = noise_image(128, 128, 13);
        let tracker = TemplateTracker::default();
        let b0 = bx(40.0, 40.0, 60.0, 52.0);
        let tpl = extract_patch(&frame0, &b0).unwrap();
        let mut frame1 = noise_image(128, 128, 14);
        paste(&mut frame1, &frame0, 40, 40, 20, 12, 42, 41);
        let r = tracker.track_patch(&b0, &tpl, &frame1).unwrap();
        // Shift everything by (u, v) = (7, 5).
        let mut shifted = noise_image(128, 128, 15);
        paste(&mut shifted, &frame1, 0, 0, 121, 123, 7, 5);
        let r2 = tracker.track_patch(&b0.translate(7.0, 5.0), &tpl, &shifted).unwrap();
        assert_eq!(r2.bbox, r.bbox.translate(7.0, 5.0));
        assert_eq!(r2.score, r.score);
    }
}
