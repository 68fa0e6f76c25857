//! Slow, obviously-correct reference implementations and random instance
//! generators. Nothing here shares code with the library beyond its data types.

use nalgebra::{Point2, Vector2};
use objdisc::{OrientedBox, Point3};
use rand::Rng;

// ---------------------------------------------------------------- geometry

/// Box footprint membership through the box's local frame.
pub fn in_box(b: &OrientedBox, x: f64, y: f64) -> bool {
    let (s, c) = b.yaw.sin_cos();
    let (dx, dy) = (x - b.cx, y - b.cy);
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u.abs() <= 0.5 * b.length && v.abs() <= 0.5 * b.width
}

fn aabb(b: &OrientedBox) -> [f64; 4] {
    let (s, c) = b.yaw.sin_cos();
    let ex = 0.5 * (b.length * c.abs() + b.width * s.abs());
    let ey = 0.5 * (b.length * s.abs() + b.width * c.abs());
    [b.cx - ex, b.cx + ex, b.cy - ey, b.cy + ey]
}

/// Monte-Carlo intersection area of two footprints: one uniform sample in each
/// cell of an `side × side` grid laid over the overlap of their bounding boxes.
pub fn mc_intersection_area(a: &OrientedBox, b: &OrientedBox, side: usize, rng: &mut impl Rng) -> f64 {
    let (p, q) = (aabb(a), aabb(b));
    let (x0, x1) = (p[0].max(q[0]), p[1].min(q[1]));
    let (y0, y1) = (p[2].max(q[2]), p[3].min(q[3]));
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let (hx, hy) = ((x1 - x0) / side as f64, (y1 - y0) / side as f64);
    let mut hits = 0usize;
    for i in 0..side {
        for j in 0..side {
            let x = x0 + (i as f64 + rng.random::<f64>()) * hx;
            let y = y0 + (j as f64 + rng.random::<f64>()) * hy;
            if in_box(a, x, y) && in_box(b, x, y) {
                hits += 1;
            }
        }
    }
    hits as f64 * hx * hy
}

/// Strict overlap test by separating axes: the footprints must interpenetrate
/// by more than `tol` meters along every axis.
pub fn sat_overlap(a: &OrientedBox, b: &OrientedBox, tol: f64) -> bool {
    let axes = |o: &OrientedBox| {
        let (s, c) = o.yaw.sin_cos();
        [Vector2::new(c, s), Vector2::new(-s, c)]
    };
    let project = |o: &OrientedBox, n: &Vector2<f64>| {
        let (s, c) = o.yaw.sin_cos();
        let center = n.x * o.cx + n.y * o.cy;
        let r = 0.5 * o.length * (n.x * c + n.y * s).abs() + 0.5 * o.width * (-n.x * s + n.y * c).abs();
        (center - r, center + r)
    };
    axes(a).iter().chain(axes(b).iter()).all(|n| {
        let (a0, a1) = project(a, n);
        let (b0, b1) = project(b, n);
        a1.min(b1) - a0.max(b0) > tol
    })
}

// ---------------------------------------------------------------- clustering

/// O(n²) DBSCAN with the documented border rule: a border point joins the
/// cluster of its smallest `(x, y, z, index)` core neighbor. Returns core flags
/// and labels renumbered by first occurrence in index order.
pub fn brute_dbscan(points: &[Point3], eps: f64, min_pts: usize) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = points.len();
    let close = |i: usize, j: usize| {
        let (dx, dy) = (points[i].x - points[j].x, points[i].y - points[j].y);
        dx * dx + dy * dy <= eps * eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts).collect();

    // Union-find over core-core edges.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && close(i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let key = |i: usize| (points[i].x, points[i].y, points[i].z, i);
    let mut root: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if core[i] {
            root[i] = Some(find(&mut parent, i));
        } else {
            let mut best: Option<usize> = None;
            for j in (0..n).filter(|&j| core[j] && close(i, j)) {
                if best.is_none_or(|b| key(j).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Less)) {
                    best = Some(j);
                }
            }
            root[i] = best.map(|b| find(&mut parent, b));
        }
    }
    (core, renumber(&root))
}

/// Relabels so that ids appear in increasing order of first occurrence.
pub fn renumber(labels: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|id| {
                let next = map.len();
                *map.entry(id).or_insert(next)
            })
        })
        .collect()
}

// ---------------------------------------------------------------- box fitting

fn cross(o: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Hull vertices by the O(n³) extreme-edge test: `(p, q)` is a hull edge when
/// every point lies left of it or on the closed segment. Sorted
/// lexicographically; collinear boundary points are not vertices.
pub fn hull_oracle(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut verts: Vec<Point2<f64>> = Vec::new();
    for &p in &pts {
        for &q in &pts {
            if p == q {
                continue;
            }
            let ok = pts.iter().all(|&r| {
                let c = cross(p, q, r);
                if c.abs() > 1e-12 {
                    return c > 0.0;
                }
                let t = (r - p).dot(&(q - p)) / (q - p).norm_squared();
                (-1e-12..=1.0 + 1e-12).contains(&t)
            });
            if ok {
                verts.push(p);
                verts.push(q);
            }
        }
    }
    verts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    verts.dedup();
    verts
}

/// Smallest enclosing-rectangle area over `n` evenly spaced orientations in `[0, π/2)`.
pub fn sweep_min_area(points: &[Point2<f64>], n: usize) -> f64 {
    (0..n)
        .map(|k| {
            let t = k as f64 * std::f64::consts::FRAC_PI_2 / n as f64;
            let (s, c) = t.sin_cos();
            let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in points {
                let u = c * p.x + s * p.y;
                let v = -s * p.x + c * p.y;
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
            (u1 - u0) * (v1 - v0)
        })
        .fold(f64::INFINITY, f64::min)
}

/// A cluster of one of three shapes (blob, filled rectangle, L outline) with a
/// random pose, 3 to 80 points.
pub fn random_cluster(rng: &mut impl Rng) -> Vec<Point2<f64>> {
    let n = rng.random_range(3..=80);
    let (cx, cy) = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
    let yaw: f64 = rng.random_range(-3.2..3.2);
    let (l, w) = (rng.random_range(0.5..6.0), rng.random_range(0.3..3.0));
    let shape = rng.random_range(0..3);
    let (s, c) = yaw.sin_cos();
    (0..n)
        .map(|_| {
            let (u, v) = match shape {
                0 => (rng.random_range(-1.0..1.0) * l * 0.5, rng.random_range(-1.0..1.0) * w * 0.5 * rng.random::<f64>()),
                1 => (rng.random_range(-0.5..0.5) * l, rng.random_range(-0.5..0.5) * w),
                _ => {
                    if rng.random_bool(0.6) {
                        (rng.random_range(-0.5..0.5) * l, -0.5 * w + rng.random_range(0.0..0.05))
                    } else {
                        (-0.5 * l + rng.random_range(0.0..0.05), rng.random_range(-0.5..0.5) * w)
                    }
                }
            };
            Point2::new(cx + c * u - s * v, cy + s * u + c * v)
        })
        .collect()
}

// ---------------------------------------------------------------- assignment

/// Best `(match count, total cost)` over every injective row → column map,
/// keeping only allowed pairs: most matches first, then least cost.
pub fn brute_assignment(costs: &[Vec<Option<f64>>], rows: usize, cols: usize) -> (usize, f64) {
    fn rec(
        costs: &[Vec<Option<f64>>],
        r: usize,
        rows: usize,
        cols: usize,
        used: &mut Vec<bool>,
        acc: (usize, f64),
        best: &mut (usize, f64),
    ) {
        if r == rows {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        // Leaving a row unmatched covers rows > cols and forbidden pairs.
        rec(costs, r + 1, rows, cols, used, acc, best);
        for c in 0..cols {
            if used[c] {
                continue;
            }
            if let Some(v) = costs[r][c] {
                used[c] = true;
                rec(costs, r + 1, rows, cols, used, (acc.0 + 1, acc.1 + v), best);
                used[c] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    rec(costs, 0, rows, cols, &mut vec![false; cols], (0, 0.0), &mut best);
    best
}

// ---------------------------------------------------------------- DTC

/// Ego pose after `s` meters of path from pose `start`, interpolating
/// position linearly and heading along the shorter turn.
pub fn walk(positions: &[Point2<f64>], yaws: &[f64], start: usize, s: f64) -> Option<(Point2<f64>, f64)> {
    let mut left = s;
    for i in start..positions.len() - 1 {
        let seg = positions[i + 1] - positions[i];
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        if left <= len {
            let t = left / len;
            let d = yaws[i + 1] - yaws[i];
            let turn = d.sin().atan2(d.cos());
            return Some((positions[i] + seg * t, yaws[i] + t * turn));
        }
        left -= len;
    }
    None
}

/// Distance to collision by fine stepping: the first multiple of `step`
/// along the path at which the ego footprint overlaps `obj`, or `cap`.
#[allow(clippy::too_many_arguments)]
pub fn dtc_oracle(
    positions: &[Point2<f64>],
    yaws: &[f64],
    start: usize,
    obj: &OrientedBox,
    ego_length: f64,
    ego_width: f64,
    cap: f64,
    step: f64,
) -> f64 {
    let mut k = 0usize;
    loop {
        let s = k as f64 * step;
        if s > cap {
            return cap;
        }
        let Some((p, yaw)) = walk(positions, yaws, start, s) else { return cap };
        if sat_overlap(&OrientedBox::bev(p.x, p.y, ego_length, ego_width, yaw), obj, 1e-9) {
            return s;
        }
        k += 1;
    }
}

// ---------------------------------------------------------------- detection

/// Greedy NMS written as repeated extraction of the best remaining box.
pub fn nms_oracle(boxes: &[OrientedBox], iou: impl Fn(&OrientedBox, &OrientedBox) -> f64, thresh: f64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..boxes.len()).collect();
    let mut kept = Vec::new();
    while !pool.is_empty() {
        let (pos, &best) = pool
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| {
                boxes[a].score.total_cmp(&boxes[b].score).then(boxes[b].canonical_cmp(&boxes[a]))
            })
            .expect("non-empty");
        pool.remove(pos);
        kept.push(best);
        pool.retain(|&j| iou(&boxes[best], &boxes[j]) <= thresh);
    }
    kept
}

/// A box with dimensions typical of the synthetic scenes.
pub fn random_box(rng: &mut impl Rng, center_span: f64) -> OrientedBox {
    OrientedBox::bev(
        rng.random_range(-center_span..center_span),
        rng.random_range(-center_span..center_span),
        rng.random_range(0.5..6.0),
        rng.random_range(0.3..3.0),
        rng.random_range(-3.2..3.2),
    )
}
