//! Boxes, rectangles, polygons and poses.
//!
//! Everything here is plain value data in meters (world) or pixels (image).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Vec3 = [f64; 3];

/// Camera pose in the unified world frame. Orientation is a unit quaternion
/// stored as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: [f64; 4],
}

impl Pose {
    pub const QUAT_TOLERANCE: f64 = 1e-6;

    pub fn identity_at(position: Vec3) -> Self {
        Pose { position, orientation: [1.0, 0.0, 0.0, 0.0] }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.orientation.iter().map(|q| q * q).sum::<f64>().sqrt();
        if !n.is_finite() || (n - 1.0).abs() > Self::QUAT_TOLERANCE {
            return Err(Error::invalid(format!("pose orientation must be a unit quaternion (norm {n})")));
        }
        if self.position.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("pose position must be finite"));
        }
        Ok(())
    }

    /// Rotates a camera-frame vector into the world frame.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let [w, x, y, z] = self.orientation;
        // v' = v + 2w(q×v) + 2 q×(q×v)
        let q = [x, y, z];
        let t = scale(cross(q, v), 2.0);
        let qt = cross(q, t);
        [v[0] + w * t[0] + qt[0], v[1] + w * t[1] + qt[1], v[2] + w * t[2] + qt[2]]
    }

    pub fn transform_point(&self, v: Vec3) -> Vec3 {
        let r = self.rotate(v);
        [r[0] + self.position[0], r[1] + self.position[1], r[2] + self.position[2]]
    }
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Axis-aligned 3D box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min_corner: Vec3,
    pub max_corner: Vec3,
}

/// How two boxes' overlap is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMetric {
    /// Intersection volume over the smaller box's volume.
    #[default]
    MinVolume,
    /// Intersection volume over union volume.
    Iou,
}

/// Result of an overlap query. `degenerate` is set when either box has zero
/// volume, in which case `ratio` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub ratio: f64,
    pub degenerate: bool,
}

impl Box3 {
    pub fn new(min_corner: Vec3, max_corner: Vec3) -> Result<Self> {
        let b = Box3 { min_corner, max_corner };
        b.validate()?;
        Ok(b)
    }

    /// Box centered at `center` with the given full extents.
    pub fn centered(center: Vec3, extents: Vec3) -> Self {
        let h = scale(extents, 0.5);
        Box3 {
            min_corner: [center[0] - h[0], center[1] - h[1], center[2] - h[2]],
            max_corner: [center[0] + h[0], center[1] + h[1], center[2] + h[2]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            let (lo, hi) = (self.min_corner[i], self.max_corner[i]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid("box corners must be finite"));
            }
            if lo > hi {
                return Err(Error::invalid(format!("box min_corner exceeds max_corner on axis {i} ({lo} > {hi})")));
            }
        }
        Ok(())
    }

    pub fn extents(&self) -> Vec3 {
        [
            self.max_corner[0] - self.min_corner[0],
            self.max_corner[1] - self.min_corner[1],
            self.max_corner[2] - self.min_corner[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        self.extents().iter().map(|e| e.max(0.0)).product()
    }

    pub fn center(&self) -> Vec3 {
        [
            0.5 * (self.min_corner[0] + self.max_corner[0]),
            0.5 * (self.min_corner[1] + self.max_corner[1]),
            0.5 * (self.min_corner[2] + self.max_corner[2]),
        ]
    }

    pub fn intersection_volume(&self, other: &Box3) -> f64 {
        (0..3)
            .map(|i| {
                let lo = self.min_corner[i].max(other.min_corner[i]);
                let hi = self.max_corner[i].min(other.max_corner[i]);
                (hi - lo).max(0.0)
            })
            .product()
    }

    /// Componentwise min/max envelope of two boxes.
    pub fn envelope(&self, other: &Box3) -> Box3 {
        let mut out = *self;
        for i in 0..3 {
            out.min_corner[i] = out.min_corner[i].min(other.min_corner[i]);
            out.max_corner[i] = out.max_corner[i].max(other.max_corner[i]);
        }
        out
    }

    pub fn translated(&self, d: Vec3) -> Box3 {
        Box3 {
            min_corner: [self.min_corner[0] + d[0], self.min_corner[1] + d[1], self.min_corner[2] + d[2]],
            max_corner: [self.max_corner[0] + d[0], self.max_corner[1] + d[1], self.max_corner[2] + d[2]],
        }
    }

    pub fn overlap(&self, other: &Box3, metric: OverlapMetric) -> Overlap {
        let (va, vb) = (self.volume(), other.volume());
        if va <= 0.0 || vb <= 0.0 {
            return Overlap { ratio: 0.0, degenerate: true };
        }
        let inter = self.intersection_volume(other);
        let denom = match metric {
            OverlapMetric::MinVolume => va.min(vb),
            OverlapMetric::Iou => va + vb - inter,
        };
        Overlap { ratio: (inter / denom).clamp(0.0, 1.0), degenerate: false }
    }
}

pub fn box_volume(a: &Box3) -> f64 {
    a.volume()
}

/// Intersection over the smaller volume; 0 for disjoint or degenerate boxes.
pub fn box_overlap_ratio(a: &Box3, b: &Box3) -> f64 {
    a.overlap(b, OverlapMetric::MinVolume).ratio
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    pub fn center(&self) -> Vec2 {
        [0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)]
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// A 2D line segment, used for doorways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

fn sub2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub fn distance2(a: Vec2, b: Vec2) -> f64 {
    let d = sub2(a, b);
    dot2(d, d).sqrt()
}

pub fn point_segment_distance(p: Vec2, s: &Segment) -> f64 {
    let ab = sub2(s.b, s.a);
    let len2 = dot2(ab, ab);
    if len2 == 0.0 {
        return distance2(p, s.a);
    }
    let t = (dot2(sub2(p, s.a), ab) / len2).clamp(0.0, 1.0);
    distance2(p, [s.a[0] + t * ab[0], s.a[1] + t * ab[1]])
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    cross2(sub2(b, a), sub2(c, a))
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

pub fn segments_intersect(s: &Segment, t: &Segment) -> bool {
    let d1 = orient(t.a, t.b, s.a);
    let d2 = orient(t.a, t.b, s.b);
    let d3 = orient(s.a, s.b, t.a);
    let d4 = orient(s.a, s.b, t.b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(t.a, t.b, s.a))
        || (d2 == 0.0 && on_segment(t.a, t.b, s.b))
        || (d3 == 0.0 && on_segment(s.a, s.b, t.a))
        || (d4 == 0.0 && on_segment(s.a, s.b, t.b))
}

pub fn segment_segment_distance(s: &Segment, t: &Segment) -> f64 {
    if segments_intersect(s, t) {
        return 0.0;
    }
    point_segment_distance(s.a, t)
        .min(point_segment_distance(s.b, t))
        .min(point_segment_distance(t.a, s))
        .min(point_segment_distance(t.b, s))
}

/// Simple polygon, counter-clockwise vertex order, implicitly closed.
pub struct Polygon<'a>(pub &'a [Vec2]);

impl Polygon<'_> {
    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.0.len();
        (0..n).map(move |i| Segment { a: self.0[i], b: self.0[(i + 1) % n] })
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|e| cross2(e.a, e.b)).sum::<f64>()
    }

    /// Area centroid; falls back to the vertex mean for zero-area input.
    pub fn centroid(&self) -> Vec2 {
        let a = self.signed_area();
        if a.abs() < 1e-12 {
            let n = self.0.len().max(1) as f64;
            let (sx, sy) = self.0.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
            return [sx / n, sy / n];
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for e in self.edges() {
            let c = cross2(e.a, e.b);
            cx += (e.a[0] + e.b[0]) * c;
            cy += (e.a[1] + e.b[1]) * c;
        }
        [cx / (6.0 * a), cy / (6.0 * a)]
    }

    /// Points on the boundary count as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        if self.0.len() < 3 {
            return false;
        }
        if self.edges().any(|e| point_segment_distance(p, &e) < 1e-12) {
            return true;
        }
        let mut inside = false;
        for e in self.edges() {
            let (a, b) = (e.a, e.b);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from a segment to the polygon region (0 when touching or inside).
    pub fn distance_to_segment(&self, s: &Segment) -> f64 {
        if self.contains(s.a) || self.contains(s.b) {
            return 0.0;
        }
        self.edges().map(|e| segment_segment_distance(s, &e)).fold(f64::INFINITY, f64::min)
    }

    /// No two non-adjacent edges intersect and adjacent edges only share their
    /// common vertex.
    pub fn is_simple(&self) -> bool {
        let n = self.0.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<Segment> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Collinear fold-back shows up as a shared non-vertex point.
                    let (e, f) = (&edges[i], &edges[j]);
                    let shared = if j == i + 1 { e.b } else { e.a };
                    let other_e = if j == i + 1 { e.a } else { e.b };
                    let other_f = if j == i + 1 { f.b } else { f.a };
                    if orient(other_e, shared, other_f) == 0.0
                        && dot2(sub2(other_e, shared), sub2(other_f, shared)) > 0.0
                    {
                        return false;
                    }
                    continue;
                }
                if segments_intersect(&edges[i], &edges[j]) {
                    return false;
                }
            }
        }
        true
    }
}
