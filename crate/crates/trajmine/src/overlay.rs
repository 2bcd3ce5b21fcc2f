//! Quality-control overlays: labels and trajectory entries drawn as quads.

use image::{Rgb, RgbImage};
use imageproc::drawing::draw_hollow_polygon_mut;
use imageproc::point::Point as DrawPoint;
use trajmine_core::geometry::{min_area_rect, order_corners};
use trajmine_core::tmm::{Provenance, PseudoFrame};
use trajmine_core::{BBox, Image, Point, Polygon, TrajectoryEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlayStyle {
    pub detection: [u8; 3],
    pub tracking: [u8; 3],
    pub hard_positive: [u8; 3],
    pub hard_negative: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            detection: [255, 230, 0],
            tracking: [230, 25, 25],
            hard_positive: [255, 130, 0],
            hard_negative: [150, 50, 210],
        }
    }
}

fn quad_of(polygon: &Polygon) -> [Point; 4] {
    match min_area_rect(polygon) {
        Ok(r) => order_corners(&r),
        Err(_) => {
            let b = polygon
                .bounds()
                .unwrap_or_else(|_| BBox::new(0.0, 0.0, 1.0, 1.0).expect("unit box"));
            b.corners()
        }
    }
}

fn draw_quad(canvas: &mut RgbImage, quad: [Point; 4], color: [u8; 3]) {
    let mut pts: Vec<DrawPoint<f32>> = quad
        .iter()
        .map(|p| DrawPoint::new(p.x as f32, p.y as f32))
        .collect();
    pts.dedup();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() >= 2 {
        draw_hollow_polygon_mut(canvas, &pts, Rgb(color));
    }
}

fn to_rgb(frame: &Image) -> RgbImage {
    let (w, h) = (frame.width(), frame.height());
    let data = match frame.channels() {
        1 => frame.as_raw().iter().flat_map(|&v| [v, v, v]).collect(),
        _ => frame.as_raw().to_vec(),
    };
    RgbImage::from_raw(w, h, data).expect("buffer matches dimensions")
}

/// Draws one quadrilateral per label, hard negative and tracking entry.
///
/// Detections, hard positives and hard negatives come from `labels`; entries
/// in `tracking` are drawn in the tracking color. With nothing to draw the
/// frame is returned unchanged; otherwise the result is RGB of the same size.
pub fn render_overlay(
    frame: &Image,
    labels: Option<&PseudoFrame>,
    tracking: &[TrajectoryEntry],
    style: &OverlayStyle,
) -> Image {
    let nothing = labels.is_none_or(|f| f.labels.is_empty() && f.hard_negatives.is_empty());
    if nothing && tracking.is_empty() {
        return frame.clone();
    }
    let mut canvas = to_rgb(frame);
    for e in tracking {
        let poly = e.mask.clone().unwrap_or_else(|| Polygon::from(&e.bbox));
        draw_quad(&mut canvas, quad_of(&poly), style.tracking);
    }
    if let Some(f) = labels {
        for h in &f.hard_negatives {
            draw_quad(&mut canvas, h.bbox.corners(), style.hard_negative);
        }
        for l in &f.labels {
            let color = match l.provenance {
                Provenance::Detection => style.detection,
                Provenance::HardPositive => style.hard_positive,
            };
            draw_quad(&mut canvas, quad_of(&l.polygon), color);
        }
    }
    let (w, h) = canvas.dimensions();
    Image::from_raw(w, h, 3, canvas.into_raw()).expect("buffer matches dimensions")
}
