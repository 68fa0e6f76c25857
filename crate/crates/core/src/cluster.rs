//! Density-based clustering of non-ground points in the ground plane.
//!
//! Neighbor queries go through a uniform hash grid with cell size `eps`, so a
//! query only inspects the 3×3 block of cells around the query point. Queries
//! are exact: the neighbor set is every point at distance `≤ eps`.
//!
//! Border points are assigned deterministically: a border point joins the
//! cluster of its neighboring core point with the smallest `(x, y, z)` key,
//! which makes the output independent of input order.

use std::collections::HashMap;

use nalgebra::Point2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxfit::convex_hull_2d;
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub eps_m: f64,
    pub min_pts: usize,
    pub near_range_m: f64,
    pub min_cluster_size: usize,
    pub max_footprint_m: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self { eps_m: 0.7, min_pts: 5, near_range_m: 40.0, min_cluster_size: 10, max_footprint_m: 15.0 }
    }
}

impl ClusterParams {
    pub fn is_valid(&self) -> bool {
        self.eps_m > 0.0 && self.min_pts >= 1 && self.near_range_m > 0.0
    }
}

/// Indices into the source cloud, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub frame_id: u64,
    pub indices: Vec<usize>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn points<'a>(&'a self, cloud: &'a PointCloud) -> impl Iterator<Item = &'a Point3> + 'a {
        self.indices.iter().map(|&i| &cloud.points[i])
    }
}

/// Uniform hash grid over 2D points for exact fixed-radius queries.
#[derive(Debug, Clone)]
pub struct GridIndex<'a> {
    points: &'a [Point2<f64>],
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [Point2<f64>], eps: f64) -> Self {
        assert!(eps > 0.0, "eps must be positive");
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &Point2<f64>, eps: f64) -> (i64, i64) {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64)
    }

    /// Indices within `eps` of `q` (inclusive), ascending.
    pub fn query(&self, q: &Point2<f64>) -> Vec<usize> {
        let (kx, ky) = Self::key(q, self.eps);
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy)) {
                    out.extend(bucket.iter().copied().filter(|&j| {
                        let d = self.points[j] - q;
                        d.x * d.x + d.y * d.y <= eps2
                    }));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        self.query(&self.points[idx])
    }
}

/// Indices of all points within `eps_m` of `points_2d[query_idx]`, itself included.
pub fn grid_neighbors(points_2d: &[Point2<f64>], query_idx: usize, eps_m: f64) -> Vec<usize> {
    GridIndex::new(points_2d, eps_m).neighbors(query_idx)
}

/// Largest pairwise distance in the set, via its convex hull.
pub fn footprint_diameter(points: &[Point2<f64>]) -> f64 {
    let hull = convex_hull_2d(points);
    let v = &hull.vertices;
    let mut best: f64 = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            best = best.max((v[i] - v[j]).norm());
        }
    }
    best
}

/// Per-point DBSCAN outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbscanLabels {
    /// At least `min_pts` points (itself included) within `eps`.
    pub core: Vec<bool>,
    /// Component id, `None` for noise. Ids follow the canonical order of each
    /// component's first core point.
    pub labels: Vec<Option<usize>>,
    pub n_components: usize,
}

/// Plain DBSCAN over the `(x, y)` of `points`. Border points join the
/// component of their smallest-key core neighbor, so the result does not
/// depend on input order.
pub fn dbscan_points(points: &[Point3], eps_m: f64, min_pts: usize) -> DbscanLabels {
    let xy: Vec<Point2<f64>> = points.iter().map(Point3::xy).collect();
    let grid = GridIndex::new(&xy, eps_m);
    let neighbors: Vec<Vec<usize>> = (0..xy.len()).into_par_iter().map(|i| grid.neighbors(i)).collect();
    let core: Vec<bool> = neighbors.iter().map(|n| n.len() >= min_pts).collect();

    let key_cmp = |a: usize, b: usize| points[a].canonical_cmp(&points[b]).then(a.cmp(&b));
    let mut order: Vec<usize> = (0..xy.len()).collect();
    order.sort_by(|&a, &b| key_cmp(a, b));

    // Connected components of core points, seeded in canonical order.
    let mut labels: Vec<Option<usize>> = vec![None; xy.len()];
    let mut n_components = 0;
    let mut stack = Vec::new();
    for &seed in &order {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        labels[seed] = Some(n_components);
        stack.push(seed);
        while let Some(p) = stack.pop() {
            for &q in &neighbors[p] {
                if core[q] && labels[q].is_none() {
                    labels[q] = Some(n_components);
                    stack.push(q);
                }
            }
        }
        n_components += 1;
    }

    for i in 0..xy.len() {
        if core[i] {
            continue;
        }
        let anchor = neighbors[i].iter().copied().filter(|&q| core[q]).min_by(|&a, &b| key_cmp(a, b));
        labels[i] = anchor.and_then(|a| labels[a]);
    }
    DbscanLabels { core, labels, n_components }
}

/// DBSCAN over `(x, y)` of the points within `near_range_m` of the ego.
///
/// Clusters smaller than `min_cluster_size` or wider than `max_footprint_m`
/// are dropped. Output is ordered by each cluster's smallest point key.
pub fn dbscan_bev(cloud: &PointCloud, params: &ClusterParams) -> Vec<Cluster> {
    assert!(params.is_valid(), "invalid cluster params: {params:?}");
    let candidates: Vec<usize> = cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.x.hypot(p.y) <= params.near_range_m)
        .map(|(i, _)| i)
        .collect();
    let local: Vec<Point3> = candidates.iter().map(|&i| cloud.points[i]).collect();
    let xy: Vec<Point2<f64>> = local.iter().map(Point3::xy).collect();
    let DbscanLabels { labels: label, n_components, .. } = dbscan_points(&local, params.eps_m, params.min_pts);
    let key_cmp = |a: usize, b: usize| local[a].canonical_cmp(&local[b]);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_components];
    for (local, l) in label.iter().enumerate() {
        if let Some(c) = l {
            members[*c].push(local);
        }
    }

    let mut clusters: Vec<(Point3, Cluster)> = members
        .into_iter()
        .filter(|m| m.len() >= params.min_cluster_size.max(1))
        .filter(|m| {
            let pts: Vec<Point2<f64>> = m.iter().map(|&i| xy[i]).collect();
            footprint_diameter(&pts) <= params.max_footprint_m
        })
        .map(|m| {
            let first = m.iter().copied().min_by(|&a, &b| key_cmp(a, b)).expect("non-empty");
            let mut indices: Vec<usize> = m.iter().map(|&i| candidates[i]).collect();
            indices.sort_unstable();
            (cloud.points[candidates[first]], Cluster { frame_id: cloud.frame_id, indices })
        })
        .collect();
    clusters.sort_by(|a, b| a.0.canonical_cmp(&b.0));
    clusters.into_iter().map(|(_, c)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(cx: f64, cy: f64) -> Vec<Point3> {
        (0..50).map(|i| Point3::new(cx + (i % 10) as f64 * 0.1, cy + (i / 10) as f64 * 0.1, 1.0)).collect()
    }

    #[test]
    fn two_separated_blobs() {
        let mut pts = blob(0.0, 0.0);
        pts.extend(blob(10.0, 0.0));
        let params = ClusterParams { eps_m: 0.5, min_pts: 4, ..Default::default() };
        let clusters = dbscan_bev(&PointCloud::new(0, 0.0, pts), &params);
        assert_eq!(clusters.len(), 2);
        assert!(clusters.iter().all(|c| c.len() == 50));
        assert_eq!(clusters[0].indices, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn beyond_near_range_is_ignored() {
        let params = ClusterParams { eps_m: 0.5, min_pts: 4, near_range_m: 40.0, ..Default::default() };
        assert!(dbscan_bev(&PointCloud::new(0, 0.0, blob(50.0, 0.0)), &params).is_empty());
    }

    #[test]
    fn single_point_neighbors_itself() {
        assert_eq!(grid_neighbors(&[Point2::new(3.0, 4.0)], 0, 0.5), vec![0]);
    }

    #[test]
    fn boundary_distance_is_inclusive() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(0.5, 0.0)];
        assert_eq!(grid_neighbors(&pts, 0, 0.5), vec![0, 1]);
        assert_eq!(grid_neighbors(&pts, 1, 0.5), vec![0, 1]);
    }

    #[test]
    fn grid_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point2<f64>> =
            (0..1000).map(|_| Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))).collect();
        let eps = 0.6;
        let grid = GridIndex::new(&pts, eps);
        for q in 0..pts.len() {
            let brute: Vec<usize> = (0..pts.len()).filter(|&j| (pts[j] - pts[q]).norm_squared() <= eps * eps).collect();
            assert_eq!(grid.neighbors(q), brute);
        }
    }

    #[test]
    fn small_and_wide_clusters_dropped() {
        let params = ClusterParams { eps_m: 0.5, min_pts: 2, min_cluster_size: 10, max_footprint_m: 3.0, ..Default::default() };
        let short: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64 * 0.1, 0.0, 1.0)).collect();
        assert!(dbscan_bev(&PointCloud::new(0, 0.0, short), &params).is_empty());
        let wall: Vec<Point3> = (0..100).map(|i| Point3::new(i as f64 * 0.1, 5.0, 1.0)).collect();
        assert!(dbscan_bev(&PointCloud::new(0, 0.0, wall), &params).is_empty());
    }

    #[test]
    fn footprint_diameter_of_rectangle() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(3.0, 0.0), Point2::new(3.0, 4.0), Point2::new(0.0, 4.0), Point2::new(1.0, 1.0)];
        assert!((footprint_diameter(&pts) - 5.0).abs() < 1e-12);
    }
}
