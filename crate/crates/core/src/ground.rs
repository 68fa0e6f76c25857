//! Grid-percentile ground model and ground-point removal.

use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundParams {
    pub cell_size_m: f64,
    /// Percentile (0–100) of cell heights taken as the raw ground estimate.
    pub percentile: f64,
    pub clearance_m: f64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self { cell_size_m: 2.0, percentile: 5.0, clearance_m: 0.3 }
    }
}

/// Per-cell ground height over a BEV grid. Cells without points are unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub cell_size: f64,
    /// Integer coordinates of cell (0, 0); cells are aligned to multiples of `cell_size`.
    pub origin: (i64, i64),
    pub nx: usize,
    pub ny: usize,
    pub heights: Vec<Option<f64>>,
}

impl HeightMap {
    fn empty(cell_size: f64) -> Self {
        Self { cell_size, origin: (0, 0), nx: 0, ny: 0, heights: vec![] }
    }

    fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        let ix = (x / self.cell_size).floor() as i64 - self.origin.0;
        let iy = (y / self.cell_size).floor() as i64 - self.origin.1;
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return None;
        }
        Some(iy as usize * self.nx + ix as usize)
    }

    /// Ground height under `(x, y)`, `None` where unknown or off the map.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        self.cell_of(x, y).and_then(|i| self.heights[i])
    }

    pub fn known_cells(&self) -> usize {
        self.heights.iter().filter(|h| h.is_some()).count()
    }
}

/// Nearest-rank percentile of an ascending slice.
pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn estimate_ground(cloud: &PointCloud, cell_size_m: f64) -> HeightMap {
    estimate_ground_with(cloud, cell_size_m, GroundParams::default().percentile)
}

/// Per occupied cell: the `percentile` of point heights, then the median over
/// the known cells of its 3×3 neighborhood.
pub fn estimate_ground_with(cloud: &PointCloud, cell_size_m: f64, percentile: f64) -> HeightMap {
    assert!(cell_size_m > 0.0, "cell size must be positive");
    if cloud.is_empty() {
        return HeightMap::empty(cell_size_m);
    }
    let key = |v: f64| (v / cell_size_m).floor() as i64;
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for p in &cloud.points {
        let (ix, iy) = (key(p.x), key(p.y));
        x0 = x0.min(ix);
        y0 = y0.min(iy);
        x1 = x1.max(ix);
        y1 = y1.max(iy);
    }
    let nx = (x1 - x0 + 1) as usize;
    let ny = (y1 - y0 + 1) as usize;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); nx * ny];
    for p in &cloud.points {
        let i = (key(p.y) - y0) as usize * nx + (key(p.x) - x0) as usize;
        buckets[i].push(p.z);
    }
    let raw: Vec<Option<f64>> = buckets
        .into_iter()
        .map(|mut zs| {
            if zs.is_empty() {
                return None;
            }
            zs.sort_by(f64::total_cmp);
            Some(percentile_sorted(&zs, percentile))
        })
        .collect();

    let mut heights = vec![None; nx * ny];
    let mut window = Vec::with_capacity(9);
    for iy in 0..ny {
        for ix in 0..nx {
            if raw[iy * nx + ix].is_none() {
                continue;
            }
            window.clear();
            for jy in iy.saturating_sub(1)..=(iy + 1).min(ny - 1) {
                for jx in ix.saturating_sub(1)..=(ix + 1).min(nx - 1) {
                    if let Some(z) = raw[jy * nx + jx] {
                        window.push(z);
                    }
                }
            }
            heights[iy * nx + ix] = Some(median(&mut window));
        }
    }
    HeightMap { cell_size: cell_size_m, origin: (x0, y0), nx, ny, heights }
}

/// Keeps points with `z > z_g + clearance_m`, and every point over an unknown cell.
pub fn remove_ground(cloud: &PointCloud, hm: &HeightMap, clearance_m: f64) -> PointCloud {
    let keep = retained_indices(cloud, hm, clearance_m);
    cloud.select(&keep)
}

/// Indices of the points [`remove_ground`] would keep.
pub fn retained_indices(cloud: &PointCloud, hm: &HeightMap, clearance_m: f64) -> Vec<usize> {
    cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| hm.height_at(p.x, p.y).is_none_or(|zg| p.z > zg + clearance_m))
        .map(|(i, _)| i)
        .collect()
}

/// Estimate and remove in one step with the given parameters.
pub fn strip_ground(cloud: &PointCloud, params: &GroundParams) -> PointCloud {
    let hm = estimate_ground_with(cloud, params.cell_size_m, params.percentile);
    remove_ground(cloud, &hm, params.clearance_m)
}
