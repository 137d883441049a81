//! Rotated-box geometry.
//!
//! Coordinates are image pixels with `y` growing downward. A [`Quad`] is
//! stored clockwise (as seen on screen), which is a positive shoelace area
//! in these coordinates. An [`RBox`] is a rectangle given by its center,
//! extents and rotation; its width runs along `(cos θ, sin θ)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Angles within this distance of `-π/4` are snapped to the `+π/4` form.
const ANGLE_TIE_EPS: f64 = 1e-9;
/// Vertices closer than this are considered coincident.
const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate quadrangle: {0}")]
    Degenerate(&'static str),
    #[error("pixel ({x}, {y}) is not strictly inside the box")]
    OutsideBox { x: f64, y: f64 },
    #[error("invalid pixel geometry: {0}")]
    InvalidGeometry(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    #[inline]
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Four-vertex polygon: an annotation or a detection outline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    points: [Point; 4],
}

impl Quad {
    /// Wraps four vertices as given, without validation or reordering.
    ///
    /// Raw annotations go through this path so that parsing never fails on
    /// geometry; use [`Quad::new`] where the invariants must hold.
    pub const fn from_points(points: [Point; 4]) -> Self {
        Self { points }
    }

    /// Validates the vertices and returns them clockwise, starting from the
    /// top-left-most vertex.
    pub fn new(points: [Point; 4]) -> Result<Self, GeometryError> {
        let quad = Self { points };
        quad.validate()?;
        Ok(quad.canonical_order())
    }

    /// `[x1, y1, ..., x4, y4]` in vertex order.
    pub fn from_coords(c: [f64; 8]) -> Self {
        Self::from_points([
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        ])
    }

    pub fn to_coords(&self) -> [f64; 8] {
        let p = &self.points;
        [p[0].x, p[0].y, p[1].x, p[1].y, p[2].x, p[2].y, p[3].x, p[3].y]
    }

    pub fn points(&self) -> &[Point; 4] {
        &self.points
    }

    pub fn signed_area(&self) -> f64 {
        polygon_signed_area(&self.points)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_convex(&self) -> bool {
        is_convex(&self.points)
    }

    /// Checks the structural invariants: finite, no coincident vertices,
    /// non-zero area and no self-intersection.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let p = &self.points;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::Degenerate("non-finite vertex"));
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                if (p[i] - p[j]).norm() < COINCIDENT_EPS {
                    return Err(GeometryError::Degenerate("coincident vertices"));
                }
            }
        }
        if segments_cross(p[0], p[1], p[2], p[3]) || segments_cross(p[1], p[2], p[3], p[0]) {
            return Err(GeometryError::Degenerate("self-intersecting"));
        }
        if self.area() < COINCIDENT_EPS {
            return Err(GeometryError::Degenerate("zero area"));
        }
        Ok(())
    }

    /// Clockwise order starting from the vertex with the smallest `x + y`
    /// (smaller `y` on ties).
    pub fn canonical_order(&self) -> Self {
        let mut pts = self.points;
        if polygon_signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        let start = (0..4)
            .min_by(|&a, &b| {
                let ka = (pts[a].x + pts[a].y, pts[a].y);
                let kb = (pts[b].x + pts[b].y, pts[b].y);
                ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        pts.rotate_left(start);
        Self { points: pts }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::from_points(self.points.map(|p| Point::new(p.x + dx, p.y + dy)))
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Self {
        Self::from_points(self.points.map(|p| Point::new(p.x * sx, p.y * sy)))
    }

    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        bounds(&self.points)
    }
}

/// Rotated rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl RBox {
    /// Builds a box and brings it to canonical form.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Self {
        Self { cx, cy, w, h, theta }.canonical()
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Same rectangle with `theta` in `[-π/4, π/4]`; an angle of exactly
    /// `-π/4` becomes `+π/4` with the extents swapped.
    pub fn canonical(&self) -> Self {
        let turns = (self.theta / FRAC_PI_2).round();
        let mut theta = self.theta - turns * FRAC_PI_2;
        let (mut w, mut h) = if (turns as i64).rem_euclid(2) == 1 {
            (self.h, self.w)
        } else {
            (self.w, self.h)
        };
        if theta <= -FRAC_PI_4 + ANGLE_TIE_EPS {
            theta += FRAC_PI_2;
            std::mem::swap(&mut w, &mut h);
        }
        Self {
            cx: self.cx,
            cy: self.cy,
            w,
            h,
            theta: theta.min(FRAC_PI_4),
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.theta > -FRAC_PI_4 && self.theta <= FRAC_PI_4
    }

    /// Unit vectors along the width and height axes.
    fn axes(&self) -> (Point, Point) {
        let (s, c) = self.theta.sin_cos();
        (Point::new(c, s), Point::new(-s, c))
    }

    /// Maps box-frame coordinates to image coordinates.
    fn frame_to_image(&self, u: f64, v: f64) -> Point {
        let (ax, ay) = self.axes();
        self.center() + ax * u + ay * v
    }

    /// Image coordinates to box-frame coordinates `(u, v)`.
    fn image_to_frame(&self, p: Point) -> (f64, f64) {
        let (ax, ay) = self.axes();
        let d = p - self.center();
        (d.dot(ax), d.dot(ay))
    }

    /// Corners in box-frame order: top-left, top-right, bottom-right,
    /// bottom-left. For a canonical box this is also the canonical
    /// [`Quad`] order.
    pub fn to_quad(&self) -> Quad {
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        Quad::from_points([
            self.frame_to_image(-hw, -hh),
            self.frame_to_image(hw, -hh),
            self.frame_to_image(hw, hh),
            self.frame_to_image(-hw, hh),
        ])
    }

    pub fn contains(&self, p: Point) -> bool {
        let (u, v) = self.image_to_frame(p);
        u.abs() < self.w / 2.0 && v.abs() < self.h / 2.0
    }

    /// Shrinks every side inward by `ratio * min(w, h)`.
    pub fn shrink(&self, ratio: f64) -> Self {
        let d = 2.0 * ratio * self.w.min(self.h);
        Self {
            w: (self.w - d).max(0.0),
            h: (self.h - d).max(0.0),
            ..*self
        }
    }
}

/// Per-pixel geometry: distances to the four box edges plus the angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGeometry {
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
    pub left: f64,
    pub theta: f64,
}

impl PixelGeometry {
    /// Channel layout used by geometry maps: top, right, bottom, left, angle.
    pub fn to_channels(&self) -> [f64; 5] {
        [self.top, self.right, self.bottom, self.left, self.theta]
    }

    pub fn from_channels(c: [f64; 5]) -> Self {
        Self {
            top: c[0],
            right: c[1],
            bottom: c[2],
            left: c[3],
            theta: c[4],
        }
    }
}

/// Rectangle of minimum area enclosing the quad, in canonical form.
///
/// Candidate orientations are the convex-hull edges (rotating calipers).
pub fn min_area_rect(quad: &Quad) -> Result<RBox, GeometryError> {
    quad.validate()?;
    let hull = convex_hull(quad.points());
    if hull.len() < 3 {
        return Err(GeometryError::Degenerate("collinear vertices"));
    }

    let mut best: Option<(f64, RBox)> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()] - hull[i];
        let len = edge.norm();
        if len < COINCIDENT_EPS {
            continue;
        }
        let rect = enclosing_rect_along(&hull, edge * (1.0 / len));
        let area = rect.area();
        match best {
            Some((best_area, _)) if area >= best_area * (1.0 - 1e-12) => {}
            _ => best = Some((area, rect)),
        }
    }
    best.map(|(_, r)| r.canonical())
        .ok_or(GeometryError::Degenerate("collinear vertices"))
}

/// Tightest rectangle around `points` whose width axis is `dir` (unit).
fn enclosing_rect_along(points: &[Point], dir: Point) -> RBox {
    let normal = Point::new(-dir.y, dir.x);
    let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &p in points {
        let u = p.dot(dir);
        let v = p.dot(normal);
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let (um, vm) = ((umin + umax) / 2.0, (vmin + vmax) / 2.0);
    let c = dir * um + normal * vm;
    RBox {
        cx: c.x,
        cy: c.y,
        w: umax - umin,
        h: vmax - vmin,
        theta: dir.y.atan2(dir.x),
    }
}

/// Distances from `p` to the edges of `rbox`, measured perpendicular to the
/// rotated edges.
pub fn encode_pixel_geometry(rbox: &RBox, p: Point) -> Result<PixelGeometry, GeometryError> {
    let (u, v) = rbox.image_to_frame(p);
    let g = PixelGeometry {
        top: rbox.h / 2.0 + v,
        right: rbox.w / 2.0 - u,
        bottom: rbox.h / 2.0 - v,
        left: rbox.w / 2.0 + u,
        theta: rbox.theta,
    };
    if g.top > 0.0 && g.right > 0.0 && g.bottom > 0.0 && g.left > 0.0 {
        Ok(g)
    } else {
        Err(GeometryError::OutsideBox { x: p.x, y: p.y })
    }
}

/// Inverse of [`encode_pixel_geometry`].
pub fn decode_pixel_geometry(p: Point, g: &PixelGeometry) -> Result<RBox, GeometryError> {
    let d = [g.top, g.right, g.bottom, g.left, g.theta];
    if d.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::InvalidGeometry("non-finite value"));
    }
    if d[..4].iter().any(|&v| v <= 0.0) {
        return Err(GeometryError::InvalidGeometry("non-positive distance"));
    }
    let (s, c) = g.theta.sin_cos();
    let u = (g.right - g.left) / 2.0;
    let v = (g.bottom - g.top) / 2.0;
    Ok(RBox::new(
        p.x + u * c - v * s,
        p.y + u * s + v * c,
        g.left + g.right,
        g.top + g.bottom,
        g.theta,
    ))
}

/// Intersection-over-union of two rotated boxes.
pub fn rotated_iou(a: &RBox, b: &RBox) -> f64 {
    quad_iou(&a.to_quad(), &b.to_quad())
}

/// Intersection-over-union of two quads by polygon clipping.
pub fn quad_iou(a: &Quad, b: &Quad) -> f64 {
    let inter = polygon_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Area of `a ∩ b`.
///
/// The clipping polygon must be convex; when only one input is convex it is
/// used as the clipper, and when neither is the hull of `b` stands in.
pub fn polygon_intersection_area(a: &Quad, b: &Quad) -> f64 {
    let (ab, bb) = (a.bounds(), b.bounds());
    if ab.2 <= bb.0 || bb.2 <= ab.0 || ab.3 <= bb.1 || bb.3 <= ab.1 {
        return 0.0;
    }
    let (ac, bc) = (a.is_convex(), b.is_convex());
    let clipped = match (ac, bc) {
        (true, true) => {
            // Fixed operand order keeps the result exactly symmetric.
            let (ca, cb) = (a.to_coords(), b.to_coords());
            if ca.partial_cmp(&cb) != Some(std::cmp::Ordering::Greater) {
                clip_polygon(a.points(), b.points())
            } else {
                clip_polygon(b.points(), a.points())
            }
        }
        (false, true) => clip_polygon(a.points(), b.points()),
        (true, false) => clip_polygon(b.points(), a.points()),
        (false, false) => clip_polygon(a.points(), &convex_hull(b.points())),
    };
    polygon_signed_area(&clipped).abs()
}

/// Sutherland–Hodgman clipping of `subject` against the convex `clip`.
pub fn clip_polygon(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut clip = clip.to_vec();
    if polygon_signed_area(&clip) < 0.0 {
        clip.reverse();
    }
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let side = |p: Point| edge.cross(p - a);

        let input = std::mem::take(&mut output);
        let mut prev = input[input.len() - 1];
        let mut prev_side = side(prev);
        for &cur in &input {
            let cur_side = side(cur);
            if cur_side >= 0.0 {
                if prev_side < 0.0 {
                    output.push(lerp_at_zero(prev, cur, prev_side, cur_side));
                }
                output.push(cur);
            } else if prev_side >= 0.0 {
                output.push(lerp_at_zero(prev, cur, prev_side, cur_side));
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    output
}

fn lerp_at_zero(p: Point, q: Point, sp: f64, sq: f64) -> Point {
    let t = sp / (sp - sq);
    p + (q - p) * t
}

/// Shoelace area; positive for clockwise-on-screen vertex order.
pub fn polygon_signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        sum += points[i].cross(points[(i + 1) % n]);
    }
    sum / 2.0
}

pub fn is_convex(points: &[Point]) -> bool {
    let n = points.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let c = points[(i + 2) % n];
        let z = (b - a).cross(c - b);
        if z.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return false;
        }
    }
    true
}

/// Andrew's monotone chain; collinear points are dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup_by(|a, b| (*a - *b).norm() < COINCIDENT_EPS);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - b) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn bounds(points: &[Point]) -> (f64, f64, f64, f64) {
    points.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
    )
}

/// Proper crossing of segments `ab` and `cd` (touching does not count).
fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}
