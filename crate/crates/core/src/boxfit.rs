//! Oriented box fitting: convex hull plus minimum-area enclosing rectangle.

use std::cmp::Ordering;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cross, OrientedBox, Point3, Polygon2};

/// Hulls with less area than this are treated as degenerate (m²).
pub const DEGENERATE_AREA: f64 = 1e-6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BoxFitError {
    #[error("cannot fit a box to an empty cluster")]
    EmptyCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxFitParams {
    /// Width floor for degenerate (collinear / single-point) clusters.
    pub min_width_m: f64,
    pub min_height_m: f64,
    /// [`fit_cluster_box`] considers every hull-edge rectangle whose area is
    /// within this fraction of the minimum.
    pub near_tie_ratio: f64,
}

impl Default for BoxFitParams {
    fn default() -> Self {
        Self { min_width_m: 0.2, min_height_m: 0.5, near_tie_ratio: 0.1 }
    }
}

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
///
/// Collinear boundary points are dropped. One distinct input point yields a
/// single vertex and collinear inputs yield the two extreme points; callers
/// detect those through [`Polygon2::is_degenerate`].
pub fn convex_hull_2d(points: &[Point2<f64>]) -> Polygon2 {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() <= 2 {
        return Polygon2::new(pts);
    }
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if cross(b - a, p - b) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 2 {
        // All points collinear collapse to the two extremes.
        return Polygon2::new(vec![pts[0], pts[pts.len() - 1]]);
    }
    Polygon2::new(hull)
}

/// A rectangle given by its center, a unit axis and half extents along that
/// axis and its left normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: Point2<f64>,
    pub axis: Vector2<f64>,
    pub half_u: f64,
    pub half_v: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        4.0 * self.half_u * self.half_v
    }
}

/// Area order in which relative differences below 1e-9 count as ties, broken
/// in favor of the longer flush edge. A triangle's three edge rectangles have
/// exactly equal areas, so a plain float comparison would pick one by rounding
/// noise and the fit would not follow rotations of the input.
fn area_order(a: &Rect, b: &Rect) -> Ordering {
    let (x, y) = (a.area(), b.area());
    if (x - y).abs() <= 1e-9 * x.max(y) {
        b.half_u.total_cmp(&a.half_u)
    } else {
        x.total_cmp(&y)
    }
}

/// Minimum-area rectangle enclosing a convex CCW polygon of at least three
/// vertices, by rotating calipers.
pub fn min_area_rectangle(hull: &Polygon2) -> Rect {
    edge_rectangles(hull).into_iter().min_by(area_order).expect("n >= 3")
}

/// For every hull edge, the smallest enclosing rectangle flush with that edge,
/// measured with three monotonically advancing support pointers.
pub fn edge_rectangles(hull: &Polygon2) -> Vec<Rect> {
    let h = &hull.vertices;
    let n = h.len();
    assert!(n >= 3, "rotating calipers need a polygon");
    let next = |i: usize| (i + 1) % n;
    let edge = |i: usize| (h[next(i)] - h[i]).normalize();

    let u0 = edge(0);
    let v0 = Vector2::new(-u0.y, u0.x);
    let argmax = |f: &dyn Fn(&Point2<f64>) -> f64| (0..n).max_by(|&a, &b| f(&h[a]).total_cmp(&f(&h[b]))).unwrap();
    let mut far_u = argmax(&|p| (p - h[0]).dot(&u0));
    let mut far_v = argmax(&|p| (p - h[0]).dot(&v0));
    let mut near_u = argmax(&|p| -(p - h[0]).dot(&u0));

    let mut rects = Vec::with_capacity(n);
    for i in 0..n {
        let u = edge(i);
        let v = Vector2::new(-u.y, u.x);
        let base = h[i];
        let pu = |k: usize| (h[k] - base).dot(&u);
        let pv = |k: usize| (h[k] - base).dot(&v);
        // Each pointer walks forward at most n steps over the whole sweep.
        let mut guard = 0;
        while pu(next(far_u)) > pu(far_u) && guard < n {
            far_u = next(far_u);
            guard += 1;
        }
        guard = 0;
        while pv(next(far_v)) > pv(far_v) && guard < n {
            far_v = next(far_v);
            guard += 1;
        }
        guard = 0;
        while pu(next(near_u)) < pu(near_u) && guard < n {
            near_u = next(near_u);
            guard += 1;
        }
        let (lo, hi, top) = (pu(near_u), pu(far_u), pv(far_v));
        rects.push(Rect {
            center: base + u * (0.5 * (lo + hi)) + v * (0.5 * top),
            axis: u,
            half_u: 0.5 * (hi - lo),
            half_v: 0.5 * top,
        });
    }
    rects
}

/// Mean distance from each point to the nearest side of the rectangle.
fn edge_closeness(rect: &Rect, points: &[Point2<f64>]) -> f64 {
    let v = Vector2::new(-rect.axis.y, rect.axis.x);
    let total: f64 = points
        .iter()
        .map(|p| {
            let d = p - rect.center;
            (rect.half_u - d.dot(&rect.axis).abs()).min(rect.half_v - d.dot(&v).abs()).max(0.0)
        })
        .sum();
    total / points.len() as f64
}

fn segment_rect(hull: &Polygon2) -> Rect {
    let v = &hull.vertices;
    if v.len() == 1 {
        return Rect { center: v[0], axis: Vector2::x(), half_u: 0.0, half_v: 0.0 };
    }
    let (mut a, mut b, mut d) = (0, 1, -1.0);
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let dij = (v[i] - v[j]).norm();
            if dij > d {
                (a, b, d) = (i, j, dij);
            }
        }
    }
    let u = (v[b] - v[a]) / d;
    let n = Vector2::new(-u.y, u.x);
    let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        let s = (p - v[a]).dot(&n);
        (lo.min(s), hi.max(s))
    });
    Rect {
        center: v[a] + u * (0.5 * d) + n * (0.5 * (lo + hi)),
        axis: u,
        half_u: 0.5 * d,
        half_v: 0.5 * (hi - lo),
    }
}

/// Fits an oriented box: minimum-area BEV rectangle and the z extent of the points.
pub fn fit_oriented_box(points: &[Point3], params: &BoxFitParams) -> Result<OrientedBox, BoxFitError> {
    fit_with(points, params, |hull, _| min_area_rectangle(hull))
}

/// Box fit for sensor clusters, which only show their near faces. An L-shaped
/// return has a right-triangle hull, and the rectangle flush with its
/// hypotenuse is about as small as the true one. Among the hull-edge
/// rectangles within `near_tie_ratio` of the minimum area this picks the one
/// whose sides the points hug most closely.
pub fn fit_cluster_box(points: &[Point3], params: &BoxFitParams) -> Result<OrientedBox, BoxFitError> {
    fit_with(points, params, |hull, xy| {
        let rects = edge_rectangles(hull);
        let min_area = rects.iter().map(Rect::area).fold(f64::INFINITY, f64::min);
        let limit = min_area * (1.0 + params.near_tie_ratio.max(0.0));
        rects
            .into_iter()
            .filter(|r| r.area() <= limit)
            .map(|r| (edge_closeness(&r, xy), r))
            .min_by(|a, b| {
                let tie = (a.0 - b.0).abs() <= 1e-9;
                if tie { area_order(&a.1, &b.1) } else { a.0.total_cmp(&b.0) }
            })
            .map(|(_, r)| r)
            .expect("at least one rectangle is within the limit")
    })
}

fn fit_with(
    points: &[Point3],
    params: &BoxFitParams,
    choose: impl Fn(&Polygon2, &[Point2<f64>]) -> Rect,
) -> Result<OrientedBox, BoxFitError> {
    if points.is_empty() {
        return Err(BoxFitError::EmptyCluster);
    }
    let xy: Vec<Point2<f64>> = points.iter().map(Point3::xy).collect();
    let hull = convex_hull_2d(&xy);
    let mut rect = if hull.len() >= 3 { choose(&hull, &xy) } else { segment_rect(&hull) };
    if hull.area() < DEGENERATE_AREA {
        let floor = 0.5 * params.min_width_m;
        rect.half_u = rect.half_u.max(floor);
        rect.half_v = rect.half_v.max(floor);
    }
    let (zmin, zmax) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
    let yaw = rect.axis.y.atan2(rect.axis.x);
    Ok(OrientedBox::new(
        rect.center.x,
        rect.center.y,
        0.5 * (zmin + zmax),
        2.0 * rect.half_u,
        2.0 * rect.half_v,
        (zmax - zmin).max(params.min_height_m),
        yaw,
    ))
}
