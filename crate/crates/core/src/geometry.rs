//! Shared geometric types and exact bird's-eye-view (BEV) box math.
//!
//! Every label, detection and ground-truth object in the pipeline is an
//! [`OrientedBox`]. BEV computations ignore `z`; the vertical extent only
//! matters when boxes are fitted or generated.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Point2, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Relative tolerance used when validating rotation matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// A single LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Unitless return strength in `[0, 1]`.
    pub intensity: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, intensity: 0.0 }
    }

    pub fn with_intensity(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }

    pub fn xy(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }

    /// Lexicographic `(x, y, z)` ordering used for deterministic tie-breaking.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.z.total_cmp(&other.z))
    }
}

/// One sweep in the ego frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub frame_id: u64,
    /// Seconds.
    pub timestamp: f64,
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(frame_id: u64, timestamp: f64, points: Vec<Point3>) -> Self {
        Self { frame_id, timestamp, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Copy of this cloud keeping only the points at the given indices.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            frame_id: self.frame_id,
            timestamp: self.timestamp,
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }
}

/// Rigid transform `world_from_ego`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// Rotation about +z by `yaw` followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        let rotation = *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix();
        Self { rotation, translation }
    }

    /// Builds a pose from a 4x4 row-major homogeneous matrix.
    pub fn from_row_major(m: &[f64; 16]) -> Self {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Self { rotation, translation }
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// `det(R) = 1` and `RᵀR = I`, both within [`ORTHONORMAL_TOL`].
    pub fn is_valid(&self) -> bool {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return false;
        }
        let gram = self.rotation.transpose() * self.rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        (self.rotation.determinant() - 1.0).abs() <= ORTHONORMAL_TOL && ortho_err <= ORTHONORMAL_TOL
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        let v = self.rotation * Vector3::new(p.x, p.y, p.z) + self.translation;
        Point3 { x: v.x, y: v.y, z: v.z, intensity: p.intensity }
    }

    /// Heading of the ego x-axis projected onto the ground plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Transforms a box center and adds the pose heading to its yaw.
    pub fn transform_box(&self, b: &OrientedBox) -> OrientedBox {
        let c = self.transform_point(&Point3::new(b.cx, b.cy, b.cz));
        OrientedBox { cx: c.x, cy: c.y, cz: c.z, yaw: canonical_yaw(b.yaw + self.yaw()), ..*b }
    }
}

/// Applies `pose` to every point of the cloud. Frame id and timestamp are kept.
pub fn transform_points(pose: &Pose, cloud: &PointCloud) -> PointCloud {
    PointCloud {
        frame_id: cloud.frame_id,
        timestamp: cloud.timestamp,
        points: cloud.points.iter().map(|p| pose.transform_point(p)).collect(),
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..PI).contains(&a) {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Resolves the `yaw` / `yaw + π` ambiguity of a box footprint into `[-π/2, π/2)`.
pub fn canonical_yaw(a: f64) -> f64 {
    if (-FRAC_PI_2..FRAC_PI_2).contains(&a) {
        return a;
    }
    let mut w = (a + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if w >= FRAC_PI_2 {
        w -= PI;
    }
    if w < -FRAC_PI_2 {
        w = -FRAC_PI_2;
    }
    w
}

/// BEV-oriented 3D box. `length` runs along the yaw direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    #[serde(rename = "l")]
    pub length: f64,
    #[serde(rename = "w")]
    pub width: f64,
    #[serde(rename = "h")]
    pub height: f64,
    pub yaw: f64,
    pub score: f64,
    pub track_id: Option<u64>,
}

impl OrientedBox {
    /// Builds a canonical box: `length ≥ width` and yaw in `[-π/2, π/2)`.
    /// Score defaults to 1, no track id.
    pub fn new(cx: f64, cy: f64, cz: f64, length: f64, width: f64, height: f64, yaw: f64) -> Self {
        let (length, width, yaw) =
            if width > length { (width, length, yaw + FRAC_PI_2) } else { (length, width, yaw) };
        Self { cx, cy, cz, length, width, height, yaw: canonical_yaw(yaw), score: 1.0, track_id: None }
    }

    /// Footprint-only convenience constructor (`cz = 0`, `height = 1`).
    pub fn bev(cx: f64, cy: f64, length: f64, width: f64, yaw: f64) -> Self {
        Self::new(cx, cy, 0.0, length, width, 1.0, yaw)
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn with_track_id(mut self, id: Option<u64>) -> Self {
        self.track_id = id;
        self
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.cx, self.cy, self.cz, self.length, self.width, self.height, self.yaw, self.score]
            .iter()
            .all(|v| v.is_finite());
        finite
            && self.width > 0.0
            && self.length >= self.width
            && self.height > 0.0
            && (-PI..PI).contains(&self.yaw)
            && (0.0..=1.0).contains(&self.score)
    }

    pub fn center_xy(&self) -> Point2<f64> {
        Point2::new(self.cx, self.cy)
    }

    /// Euclidean BEV distance of the center from the ego origin.
    pub fn range(&self) -> f64 {
        self.cx.hypot(self.cy)
    }

    pub fn bev_area(&self) -> f64 {
        self.length * self.width
    }

    /// Unit vectors along the length and width axes.
    pub fn axes(&self) -> (Vector2<f64>, Vector2<f64>) {
        let (s, c) = self.yaw.sin_cos();
        (Vector2::new(c, s), Vector2::new(-s, c))
    }

    /// BEV corners, counter-clockwise starting at the rear-right corner.
    pub fn corners(&self) -> [Point2<f64>; 4] {
        let (u, v) = self.axes();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let c = self.center_xy();
        [c - u * hl - v * hw, c + u * hl - v * hw, c + u * hl + v * hw, c - u * hl + v * hw]
    }

    /// Total order over all geometric fields, used for deterministic sorting.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        let a = [self.cx, self.cy, self.cz, self.length, self.width, self.height, self.yaw];
        let b = [other.cx, other.cy, other.cz, other.length, other.width, other.height, other.yaw];
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(self.score.total_cmp(&other.score))
            .then(self.track_id.cmp(&other.track_id))
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon2 {
    pub vertices: Vec<Point2<f64>>,
}

impl Polygon2 {
    pub fn new(vertices: Vec<Point2<f64>>) -> Self {
        Self { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area, positive for counter-clockwise order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        0.5 * acc
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// True when fewer than three vertices remain or the enclosed area vanishes.
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3 || self.area() < 1e-12
    }

    /// CCW orientation and convexity, with a `-1e-9` allowance on edge cross products.
    pub fn is_ccw_convex(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            cross(b - a, c - b) >= -1e-9
        })
    }

    /// Point-in-convex-polygon test, boundary inclusive.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            cross(b - a, p - a) >= 0.0
        })
    }
}

pub(crate) fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// BEV footprint of a box as a 4-vertex CCW rectangle.
pub fn box_to_polygon(b: &OrientedBox) -> Polygon2 {
    Polygon2::new(b.corners().to_vec())
}

/// Area of `p ∩ q` for convex CCW polygons (Sutherland–Hodgman clipping).
pub fn convex_intersection_area(p: &Polygon2, q: &Polygon2) -> f64 {
    if p.len() < 3 || q.len() < 3 {
        return 0.0;
    }
    let mut output = p.vertices.clone();
    let m = q.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = q.vertices[i];
        let b = q.vertices[(i + 1) % m];
        let edge = b - a;
        let input = std::mem::take(&mut output);
        let side = |pt: &Point2<f64>| cross(edge, pt - a);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let sc = side(&cur);
            let sp = side(&prev);
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(segment_line_crossing(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(segment_line_crossing(prev, cur, sp, sc));
            }
        }
    }
    Polygon2::new(output).area()
}

fn segment_line_crossing(p: Point2<f64>, q: Point2<f64>, sp: f64, sq: f64) -> Point2<f64> {
    let t = sp / (sp - sq);
    p + (q - p) * t
}

/// Footprint intersection-over-union of two boxes, in `[0, 1]`.
pub fn bev_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let inter = convex_intersection_area(&box_to_polygon(a), &box_to_polygon(b));
    let union = a.bev_area() + b.bev_area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
