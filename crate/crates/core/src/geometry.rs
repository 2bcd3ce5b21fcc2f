//! Boxes, polygons, rotated rectangles and affine transforms.
//!
//! Coordinates are image pixels: `x` grows to the right, `y` grows downward.
//! Angles are in degrees and a positive angle turns the `+x` axis toward `+y`
//! (clockwise on screen).

use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;

/// Gray level used for pixels that fall outside the warped source.
pub const DEFAULT_FILL: u8 = 128;

/// Vertical tolerance, in pixels, under which two corners count as equally high.
const CORNER_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): needs finite coordinates with x1 < x2 and y1 < y2")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("polygon needs at least 3 finite vertices, got {0}")]
    InvalidPolygon(usize),
    #[error("degenerate geometry: all points are collinear")]
    DegenerateGeometry,
    #[error("invalid affine parameters: {0}")]
    InvalidAffine(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    /// `self + s * (other - self)`.
    pub fn lerp(self, other: Point, s: f64) -> Point {
        Point::new(
            self.x + s * (other.x - self.x),
            self.y + s * (other.y - self.y),
        )
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned box with strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(GeometryError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(x, y, x + w, y + h)
    }

    /// Tight axis-aligned bounds of a point set.
    pub fn bounding<'a, I>(points: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = &'a Point>,
    {
        let mut it = points.into_iter();
        let first = it.next().ok_or(GeometryError::DegenerateGeometry)?;
        let (mut x1, mut y1, mut x2, mut y2) = (first.x, first.y, first.x, first.y);
        for p in it {
            x1 = x1.min(p.x);
            y1 = y1.min(p.y);
            x2 = x2.max(p.x);
            y2 = y2.max(p.y);
        }
        Self::new(x1, y1, x2, y2)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x1, self.y1),
            Point::new(self.x2, self.y1),
            Point::new(self.x2, self.y2),
            Point::new(self.x1, self.y2),
        ]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Grows the box by `pad_x` on the left and right and `pad_y` on top and bottom.
    pub fn expand(&self, pad_x: f64, pad_y: f64) -> Result<Self, GeometryError> {
        Self::new(
            self.x1 - pad_x,
            self.y1 - pad_y,
            self.x2 + pad_x,
            self.y2 + pad_y,
        )
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        BBox::new(
            self.x1.max(other.x1),
            self.y1.max(other.y1),
            self.x2.min(other.x2),
            self.y2.min(other.y2),
        )
        .ok()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Clips to `[0, width] x [0, height]`; `None` when nothing is left.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        BBox::new(
            self.x1.max(0.0),
            self.y1.max(0.0),
            self.x2.min(width),
            self.y2.min(height),
        )
        .ok()
    }
}

/// Intersection over union of two axis-aligned boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Closed polygon given by its vertices in order; the closing edge is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 || !vertices.iter().all(|p| p.is_finite()) {
            return Err(GeometryError::InvalidPolygon(vertices.len()));
        }
        Ok(Self { vertices })
    }

    /// Builds a polygon from `[x0, y0, x1, y1, ...]`.
    pub fn from_flat(coords: &[f64]) -> Result<Self, GeometryError> {
        if !coords.len().is_multiple_of(2) {
            return Err(GeometryError::InvalidPolygon(coords.len() / 2));
        }
        Self::new(
            coords
                .chunks_exact(2)
                .map(|c| Point::new(c[0], c[1]))
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum();
        0.5 * twice.abs()
    }

    pub fn bounds(&self) -> Result<BBox, GeometryError> {
        BBox::bounding(&self.vertices)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn map_points(&self, mut f: impl FnMut(Point) -> Point) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|p| f(*p)).collect(),
        }
    }
}

impl From<&BBox> for Polygon {
    fn from(b: &BBox) -> Self {
        Polygon {
            vertices: b.corners().to_vec(),
        }
    }
}

/// Oriented rectangle. `angle` is the direction of the `width` side and is
/// kept in `[-45, 45)` degrees by [`RotatedRect::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedRect {
    pub center: Point,
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl RotatedRect {
    /// Canonicalizes the angle into `[-45, 45)`, swapping the sides for every
    /// quarter turn removed.
    pub fn new(center: Point, width: f64, height: f64, angle: f64) -> Self {
        let mut angle = angle % 180.0;
        let (mut w, mut h) = (width.max(0.0), height.max(0.0));
        while angle >= 45.0 {
            angle -= 90.0;
            core::mem::swap(&mut w, &mut h);
        }
        while angle < -45.0 {
            angle += 90.0;
            core::mem::swap(&mut w, &mut h);
        }
        Self {
            center,
            width: w,
            height: h,
            angle,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    fn axes(&self) -> (Point, Point) {
        let rad = self.angle.to_radians();
        let (s, c) = (libm::sin(rad), libm::cos(rad));
        (Point::new(c, s), Point::new(-s, c))
    }

    /// Corners in construction order (not canonical; see [`order_corners`]).
    pub fn corners(&self) -> [Point; 4] {
        let (u, v) = self.axes();
        let (hw, hh) = (0.5 * self.width, 0.5 * self.height);
        let at = |su: f64, sv: f64| {
            Point::new(
                self.center.x + su * hw * u.x + sv * hh * v.x,
                self.center.y + su * hw * u.y + sv * hh * v.y,
            )
        };
        [at(-1.0, -1.0), at(1.0, -1.0), at(1.0, 1.0), at(-1.0, 1.0)]
    }

    /// Whether `p` lies inside the rectangle grown by `tol` on every side.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let (u, v) = self.axes();
        let (dx, dy) = (p.x - self.center.x, p.y - self.center.y);
        let pu = dx * u.x + dy * u.y;
        let pv = dx * v.x + dy * v.y;
        pu.abs() <= 0.5 * self.width + tol && pv.abs() <= 0.5 * self.height + tol
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull by monotone chain; collinear points are dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap_or(Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal))
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Minimum-area enclosing rectangle of a polygon's vertices.
///
/// One side of the optimal rectangle is collinear with a hull edge, so every
/// hull edge direction is tried and the smallest projected extent wins.
pub fn min_area_rect(polygon: &Polygon) -> Result<RotatedRect, GeometryError> {
    let hull = convex_hull(polygon.vertices());
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateGeometry);
    }
    let origin = hull[0];
    let mut best: Option<(f64, RotatedRect)> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len = libm::hypot(dx, dy);
        if len == 0.0 {
            continue;
        }
        let u = Point::new(dx / len, dy / len);
        let v = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &hull {
            let (px, py) = (p.x - origin.x, p.y - origin.y);
            let pu = px * u.x + py * u.y;
            let pv = px * v.x + py * v.y;
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let area = (umax - umin) * (vmax - vmin);
        let better = match &best {
            None => true,
            Some((best_area, _)) => area < best_area * (1.0 - 1e-12),
        };
        if better {
            let cu = 0.5 * (umin + umax);
            let cv = 0.5 * (vmin + vmax);
            let center = Point::new(
                origin.x + cu * u.x + cv * v.x,
                origin.y + cu * u.y + cv * v.y,
            );
            let angle = libm::atan2(u.y, u.x).to_degrees();
            best = Some((
                area,
                RotatedRect::new(center, umax - umin, vmax - vmin, angle),
            ));
        }
    }
    best.map(|(_, r)| r).ok_or(GeometryError::DegenerateGeometry)
}

/// Orders four corner points canonically: the corner with the smallest `y`
/// (then smallest `x`) first, the rest clockwise on screen.
pub fn order_points(points: [Point; 4]) -> [Point; 4] {
    let cx = points.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mut pts = points;
    // With y pointing down, increasing atan2 is clockwise on screen.
    pts.sort_by(|a, b| {
        let ta = libm::atan2(a.y - cy, a.x - cx);
        let tb = libm::atan2(b.y - cy, b.x - cx);
        ta.partial_cmp(&tb).unwrap_or(Ordering::Equal)
    });
    let mut first = 0;
    for i in 1..4 {
        let (p, q) = (pts[i], pts[first]);
        if p.y < q.y - CORNER_EPS || ((p.y - q.y).abs() <= CORNER_EPS && p.x < q.x) {
            first = i;
        }
    }
    pts.rotate_left(first);
    pts
}

pub fn order_corners(rect: &RotatedRect) -> [Point; 4] {
    order_points(rect.corners())
}

/// Rotation, uniform scale and translation about a center point.
///
/// A point is scaled and rotated about `center`, then shifted by `translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    /// Rotation in degrees.
    pub theta_rot: f64,
    /// Uniform scale factor, strictly positive.
    pub delta: f64,
    pub center: Point,
    pub translation: Point,
}

impl AffineParams {
    pub fn new(
        theta_rot: f64,
        delta: f64,
        center: Point,
        translation: Point,
    ) -> Result<Self, GeometryError> {
        let p = Self {
            theta_rot,
            delta,
            center,
            translation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn identity(center: Point) -> Self {
        Self {
            theta_rot: 0.0,
            delta: 1.0,
            center,
            translation: Point::new(0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.theta_rot.is_finite()
            || !self.center.is_finite()
            || !self.translation.is_finite()
        {
            return Err(GeometryError::InvalidAffine("non-finite parameter"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(GeometryError::InvalidAffine("scale must be positive"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.theta_rot == 0.0
            && self.delta == 1.0
            && self.translation.x == 0.0
            && self.translation.y == 0.0
    }

    pub fn matrix(&self) -> AffineMatrix {
        let rad = self.theta_rot.to_radians();
        let (s, c) = (libm::sin(rad), libm::cos(rad));
        let (a, b, d, e) = (self.delta * c, -self.delta * s, self.delta * s, self.delta * c);
        let (cx, cy) = (self.center.x, self.center.y);
        AffineMatrix([
            [a, b, cx - (a * cx + b * cy) + self.translation.x],
            [d, e, cy - (d * cx + e * cy) + self.translation.y],
        ])
    }

    pub fn apply(&self, p: Point) -> Point {
        self.matrix().apply(p)
    }
}

/// Row-major 2x3 affine matrix: `[x', y'] = M * [x, y, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMatrix(pub [[f64; 3]; 2]);

impl AffineMatrix {
    pub fn apply(&self, p: Point) -> Point {
        let m = &self.0;
        Point::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2],
        )
    }

    pub fn determinant(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Option<AffineMatrix> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let [[a, b, tx], [d, e, ty]] = self.0;
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Some(AffineMatrix([
            [ia, ib, -(ia * tx + ib * ty)],
            [id, ie, -(id * tx + ie * ty)],
        ]))
    }
}

pub fn affine_point(t: &AffineParams, p: Point) -> Point {
    t.apply(p)
}

pub fn transform_polygon(t: &AffineParams, polygon: &Polygon) -> Polygon {
    let m = t.matrix();
    polygon.map_points(|p| m.apply(p))
}

/// Interpolates between two parameter sets. Angle, center and translation
/// move linearly in `s`; scale moves geometrically. Both endpoints are exact.
pub fn lerp_affine(a: &AffineParams, b: &AffineParams, s: f64) -> AffineParams {
    let s = s.clamp(0.0, 1.0);
    let lin = |x: f64, y: f64| (1.0 - s) * x + s * y;
    let pt = |p: Point, q: Point| Point::new(lin(p.x, q.x), lin(p.y, q.y));
    AffineParams {
        theta_rot: lin(a.theta_rot, b.theta_rot),
        delta: libm::pow(a.delta, 1.0 - s) * libm::pow(b.delta, s),
        center: pt(a.center, b.center),
        translation: pt(a.translation, b.translation),
    }
}

/// Warps `img` by `t` into an `out_width x out_height` raster with bilinear
/// sampling; unmapped pixels get [`DEFAULT_FILL`].
pub fn warp_image(img: &Image, t: &AffineParams, out_width: u32, out_height: u32) -> Image {
    warp_image_with_fill(img, t, out_width, out_height, DEFAULT_FILL)
}

pub fn warp_image_with_fill(
    img: &Image,
    t: &AffineParams,
    out_width: u32,
    out_height: u32,
    fill: u8,
) -> Image {
    let channels = img.channels();
    let mut out = Image::filled(out_width, out_height, channels, fill);
    if img.is_empty() {
        return out;
    }
    let Some(inv) = t.matrix().inverse() else {
        return out;
    };
    let (w, h) = (img.width(), img.height());
    let (xmax, ymax) = (f64::from(w - 1), f64::from(h - 1));
    const EDGE: f64 = 1e-6;
    let mut acc = [0.0f64; 3];
    for oy in 0..out_height {
        for ox in 0..out_width {
            let src = inv.apply(Point::new(f64::from(ox), f64::from(oy)));
            if src.x < -EDGE || src.y < -EDGE || src.x > xmax + EDGE || src.y > ymax + EDGE {
                continue;
            }
            let sx = src.x.clamp(0.0, xmax);
            let sy = src.y.clamp(0.0, ymax);
            let x0 = libm::floor(sx) as u32;
            let y0 = libm::floor(sy) as u32;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - f64::from(x0);
            let fy = sy - f64::from(y0);
            let weights = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ];
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (x, y, wgt) in weights {
                if wgt == 0.0 {
                    continue;
                }
                for (a, v) in acc.iter_mut().zip(img.pixel(x, y)) {
                    *a += wgt * f64::from(*v);
                }
            }
            for (dst, a) in out.pixel_mut(ox, oy).iter_mut().zip(acc.iter()) {
                *dst = libm::round(*a).clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}
