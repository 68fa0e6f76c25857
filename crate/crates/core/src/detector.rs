//! Translation-equivariant BEV detector built from a bank of correlation templates.
//!
//! Sweeps are rasterized into log-scaled occupancy grids. Training averages the
//! grid patches around near-range labels, grouped by yaw bin and rotated into
//! the bin's reference orientation, into zero-mean unit-norm templates.
//! Detection evaluates normalized cross-correlation of every template at every
//! grid position whose window fits inside the grid, so a pattern learned close
//! to the sensor responds identically wherever it appears, including far range.
//!
//! Correlation is computed by scattering each non-zero cell into the response
//! maps in row-major cell order. A shift of the grid therefore shifts the
//! responses exactly (same operands, same summation order).

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{bev_iou, canonical_yaw, OrientedBox, PointCloud};
use crate::ground::percentile_sorted;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("no usable training labels within range")]
    NoLabels,
    #[error("grid spec mismatch: model expects {model} but grid is {grid}")]
    SpecMismatch { model: GridSpec, grid: GridSpec },
    #[error("invalid detector parameters: {0}")]
    InvalidParams(String),
}

/// Raster geometry. Cell `(ix, iy)` covers `[x_min + ix·cell, x_min + (ix+1)·cell)`
/// and likewise in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell_size_m: f64,
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[x {}..{}, y {}..{}, cell {} m]",
            self.x_min, self.x_max, self.y_min, self.y_max, self.cell_size_m
        )
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::centered(80.0, 0.25)
    }
}

impl GridSpec {
    /// Square grid with the ego at its center.
    pub fn centered(half_extent_m: f64, cell_size_m: f64) -> Self {
        Self { x_min: -half_extent_m, x_max: half_extent_m, y_min: -half_extent_m, y_max: half_extent_m, cell_size_m }
    }

    pub fn nx(&self) -> usize {
        ((self.x_max - self.x_min) / self.cell_size_m).round() as usize
    }

    pub fn ny(&self) -> usize {
        ((self.y_max - self.y_min) / self.cell_size_m).round() as usize
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let check = |extent: f64| {
            let n = (extent / self.cell_size_m).round();
            extent > 0.0 && n >= 1.0 && (n * self.cell_size_m - extent).abs() <= 1e-9 * extent.max(1.0)
        };
        if !(self.cell_size_m > 0.0) || !check(self.x_max - self.x_min) || !check(self.y_max - self.y_min) {
            return Err(DetectorError::InvalidParams(format!("extents of {self} must be positive multiples of the cell size")));
        }
        Ok(())
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.x_min) / self.cell_size_m).floor();
        let fy = ((y - self.y_min) / self.cell_size_m).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx() as f64 || fy >= self.ny() as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.x_min + (ix as f64 + 0.5) * self.cell_size_m,
            self.y_min + (iy as f64 + 0.5) * self.cell_size_m,
        )
    }
}

/// Dense occupancy raster, `values[iy * nx + ix] = ln(1 + count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl BevGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { values: vec![0.0; spec.nx() * spec.ny()], spec }
    }

    pub fn nx(&self) -> usize {
        self.spec.nx()
    }

    pub fn ny(&self) -> usize {
        self.spec.ny()
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx() + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        let nx = self.nx();
        self.values[iy * nx + ix] = v;
    }

    /// The grid content moved by whole cells; vacated cells become zero.
    pub fn shifted(&self, dx: i64, dy: i64) -> BevGrid {
        let (nx, ny) = (self.nx() as i64, self.ny() as i64);
        let mut out = BevGrid::zeros(self.spec);
        for iy in 0..ny {
            for ix in 0..nx {
                let (tx, ty) = (ix + dx, iy + dy);
                if (0..nx).contains(&tx) && (0..ny).contains(&ty) {
                    out.values[(ty * nx + tx) as usize] = self.values[(iy * nx + ix) as usize];
                }
            }
        }
        out
    }

    fn nonzero(&self) -> Vec<(usize, usize, f64)> {
        let nx = self.nx();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i % nx, i / nx, v))
            .collect()
    }
}

/// Counts points per cell, ignoring points outside the grid, then log-scales.
pub fn rasterize_bev(cloud: &PointCloud, spec: &GridSpec) -> BevGrid {
    let mut counts = vec![0u32; spec.nx() * spec.ny()];
    for p in &cloud.points {
        if let Some((ix, iy)) = spec.cell_of(p.x, p.y) {
            counts[iy * spec.nx() + ix] += 1;
        }
    }
    BevGrid { spec: *spec, values: counts.into_iter().map(|c| (c as f64).ln_1p()).collect() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    pub grid: GridSpec,
    /// Number of yaw bins over the half-turn `[-π/2, π/2)`.
    pub yaw_bins: usize,
    /// Odd template side length in cells.
    pub patch_size: usize,
    pub nms_iou: f64,
    /// Percentile of training self-responses used as the detection threshold.
    pub threshold_percentile: f64,
    /// Only labels whose center lies within this range are used for training.
    pub train_range_m: f64,
    /// Bins with fewer contributing labels get no template. A template
    /// averaged from a handful of labels is mostly noise and fires everywhere.
    pub min_bin_labels: usize,
    /// A candidate must be the maximum of its own bin's response within this
    /// radius (square window, meters; at least one cell).
    pub peak_radius_m: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            yaw_bins: 8,
            patch_size: 33,
            nms_iou: 0.2,
            threshold_percentile: 10.0,
            train_range_m: 40.0,
            min_bin_labels: 10,
            peak_radius_m: 0.25,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), DetectorError> {
        self.grid.validate()?;
        if self.yaw_bins == 0 {
            return Err(DetectorError::InvalidParams("yaw_bins must be >= 1".into()));
        }
        if self.patch_size % 2 == 0 || self.patch_size > self.grid.nx().min(self.grid.ny()) {
            return Err(DetectorError::InvalidParams("patch_size must be odd and fit in the grid".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(DetectorError::InvalidParams("nms_iou must lie in (0, 1)".into()));
        }
        if !(self.peak_radius_m >= 0.0) {
            return Err(DetectorError::InvalidParams("peak_radius_m must be >= 0".into()));
        }
        if !(0.0..=100.0).contains(&self.threshold_percentile) {
            return Err(DetectorError::InvalidParams("threshold_percentile must lie in [0, 100]".into()));
        }
        Ok(())
    }
}

/// Reference yaws of `k` bins evenly covering `[-π/2, π/2)`, starting at `-π/2`.
pub fn bin_centers(k: usize) -> Vec<f64> {
    (0..k).map(|i| -FRAC_PI_2 + i as f64 * PI / k as f64).collect()
}

/// Index of the bin whose center is nearest to `yaw`, modulo π.
pub fn yaw_bin(yaw: f64, k: usize) -> usize {
    let t = (canonical_yaw(yaw) + FRAC_PI_2) / (PI / k as f64);
    (t.round() as usize) % k
}

/// One orientation bin of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateBin {
    pub yaw: f64,
    /// Median dimensions of the labels that formed this template.
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub cz: f64,
    pub contributors: usize,
    /// Row-major `patch_size × patch_size` values; rows step in `y`, columns in `x`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateModel {
    pub spec: GridSpec,
    pub yaw_bins: usize,
    pub patch_size: usize,
    pub bins: Vec<TemplateBin>,
    /// Correlation threshold in `(-1, 1)`.
    pub threshold: f64,
    pub nms_iou: f64,
    /// Half-width, in cells, of the window a peak must dominate.
    pub peak_radius_cells: usize,
}

impl TemplateModel {
    pub fn validate(&self) -> Result<(), DetectorError> {
        self.spec.validate()?;
        let bad = |m: String| Err(DetectorError::InvalidParams(m));
        if self.bins.is_empty() {
            return bad("model has no templates".into());
        }
        if self.patch_size % 2 == 0 {
            return bad("patch_size must be odd".into());
        }
        if !(self.threshold > -1.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (-1, 1)", self.threshold));
        }
        for (i, b) in self.bins.iter().enumerate() {
            if b.values.len() != self.patch_size * self.patch_size {
                return bad(format!("template {i} has {} values", b.values.len()));
            }
            let norm = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return bad(format!("template {i} is not unit norm ({norm})"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// Score is the correlation mapped from `[-1, 1]` to `[0, 1]`.
    pub bbox: OrientedBox,
    pub bin: usize,
    pub cell: (usize, usize),
    pub ncc: f64,
}

/// Samples a `p × p` patch around `(cx, cy)` with offsets rotated by `rotation`,
/// nearest-neighbor, zero outside the grid.
pub fn extract_patch(grid: &BevGrid, cx: f64, cy: f64, rotation: f64, p: usize) -> Vec<f64> {
    let h = (p / 2) as f64;
    let cell = grid.spec.cell_size_m;
    let (s, c) = rotation.sin_cos();
    let mut out = Vec::with_capacity(p * p);
    for r in 0..p {
        for col in 0..p {
            let dx = (col as f64 - h) * cell;
            let dy = (r as f64 - h) * cell;
            let x = cx + c * dx - s * dy;
            let y = cy + s * dx + c * dy;
            out.push(grid.spec.cell_of(x, y).map_or(0.0, |(ix, iy)| grid.get(ix, iy)));
        }
    }
    out
}

/// Zero-mean, unit-norm copy, or `None` for a constant input.
pub fn normalize_template(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 1e-12).then(|| centered.into_iter().map(|v| v / norm).collect())
}

fn ncc_from_sums(corr: f64, s1: f64, s2: f64, n: f64) -> f64 {
    let var = s2 - s1 * s1 / n;
    if !(var > 1e-12 * s2.max(f64::MIN_POSITIVE)) {
        return 0.0;
    }
    (corr / var.sqrt()).clamp(-1.0, 1.0)
}

/// Normalized cross-correlation of a zero-mean template with the window
/// centered at cell `(ix, iy)`, treating cells outside the grid as zero.
pub fn ncc_at(grid: &BevGrid, template: &[f64], p: usize, ix: usize, iy: usize) -> f64 {
    let h = (p / 2) as i64;
    let (nx, ny) = (grid.nx() as i64, grid.ny() as i64);
    let (mut corr, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for r in 0..p as i64 {
        for c in 0..p as i64 {
            let (x, y) = (ix as i64 + c - h, iy as i64 + r - h);
            if x < 0 || y < 0 || x >= nx || y >= ny {
                continue;
            }
            let w = grid.get(x as usize, y as usize);
            corr += template[(r * p as i64 + c) as usize] * w;
            s1 += w;
            s2 += w * w;
        }
    }
    ncc_from_sums(corr, s1, s2, (p * p) as f64)
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

/// Builds a template bank from grids and their labels (ego frame of each grid).
///
/// Only labels within `params.train_range_m` contribute. The threshold is the
/// `threshold_percentile` of each contributing label's response to its own
/// bin's template.
pub fn train_templates(samples: &[(&BevGrid, &[OrientedBox])], params: &DetectorParams) -> Result<TemplateModel, DetectorError> {
    params.validate()?;
    for (grid, _) in samples {
        if grid.spec != params.grid {
            return Err(DetectorError::SpecMismatch { model: params.grid, grid: grid.spec });
        }
    }
    let k = params.yaw_bins;
    let p = params.patch_size;
    let centers = bin_centers(k);
    let mut sums = vec![vec![0.0; p * p]; k];
    let mut members: Vec<Vec<(usize, OrientedBox)>> = vec![Vec::new(); k];
    for (si, (grid, labels)) in samples.iter().enumerate() {
        for b in labels.iter().filter(|b| b.range() <= params.train_range_m) {
            let bin = yaw_bin(b.yaw, k);
            let patch = extract_patch(grid, b.cx, b.cy, b.yaw - centers[bin], p);
            for (acc, v) in sums[bin].iter_mut().zip(&patch) {
                *acc += v;
            }
            members[bin].push((si, *b));
        }
    }
    if members.iter().all(Vec::is_empty) {
        return Err(DetectorError::NoLabels);
    }

    let mut bins = Vec::new();
    let mut responses = Vec::new();
    for (bin, (sum, contributing)) in sums.iter().zip(&members).enumerate() {
        if contributing.is_empty() || contributing.len() < params.min_bin_labels {
            continue;
        }
        let count = contributing.len() as f64;
        let mean_patch: Vec<f64> = sum.iter().map(|v| v / count).collect();
        let Some(values) = normalize_template(&mean_patch) else { continue };
        for (si, b) in contributing {
            let grid = samples[*si].0;
            let r = match grid.spec.cell_of(b.cx, b.cy) {
                Some((ix, iy)) => ncc_at(grid, &values, p, ix, iy),
                None => 0.0,
            };
            responses.push(r);
        }
        let dim = |f: fn(&OrientedBox) -> f64| median(&mut contributing.iter().map(|(_, b)| f(b)).collect::<Vec<_>>());
        bins.push(TemplateBin {
            yaw: centers[bin],
            length: dim(|b| b.length),
            width: dim(|b| b.width),
            height: dim(|b| b.height),
            cz: dim(|b| b.cz),
            contributors: contributing.len(),
            values,
        });
    }
    if bins.is_empty() {
        return Err(DetectorError::NoLabels);
    }
    responses.sort_by(f64::total_cmp);
    let threshold = percentile_sorted(&responses, params.threshold_percentile).clamp(-1.0 + 1e-6, 1.0 - 1e-6);
    Ok(TemplateModel {
        spec: params.grid,
        yaw_bins: k,
        patch_size: p,
        bins,
        threshold,
        nms_iou: params.nms_iou,
        peak_radius_cells: ((params.peak_radius_m / params.grid.cell_size_m).round() as usize).max(1),
    })
}

/// Dense correlation maps, one per template, over all valid window centers.
/// Entries outside the valid region are zero.
pub fn response_maps(grid: &BevGrid, model: &TemplateModel) -> Result<Vec<Vec<f64>>, DetectorError> {
    if grid.spec != model.spec {
        return Err(DetectorError::SpecMismatch { model: model.spec, grid: grid.spec });
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let p = model.patch_size;
    let h = p / 2;
    if nx < p || ny < p {
        return Ok(vec![vec![0.0; nx * ny]; model.bins.len()]);
    }
    let cells = grid.nonzero();
    // Valid centers: h <= c < n - h. A cell at x feeds centers x - h ..= x + h.
    let span = |x: usize, n: usize| (x.saturating_sub(h).max(h), (x + h).min(n - 1 - h));

    let scatter = |weights: &dyn Fn(usize, usize, f64) -> f64| {
        let mut acc = vec![0.0; nx * ny];
        for &(x, y, w) in &cells {
            let (cy0, cy1) = span(y, ny);
            let (cx0, cx1) = span(x, nx);
            if cy0 > cy1 || cx0 > cx1 {
                continue;
            }
            for cy in cy0..=cy1 {
                let r = y + h - cy;
                let row = &mut acc[cy * nx..(cy + 1) * nx];
                for cx in cx0..=cx1 {
                    let c = x + h - cx;
                    row[cx] += weights(r, c, w);
                }
            }
        }
        acc
    };

    let s1 = scatter(&|_, _, w| w);
    let s2 = scatter(&|_, _, w| w * w);
    let n = (p * p) as f64;
    let maps = model
        .bins
        .par_iter()
        .map(|bin| {
            let t = &bin.values;
            let corr = scatter(&|r, c, w| t[r * p + c] * w);
            corr.iter().enumerate().map(|(i, &cv)| ncc_from_sums(cv, s1[i], s2[i], n)).collect()
        })
        .collect();
    Ok(maps)
}

/// Runs every template over the full grid and returns NMS-merged detections,
/// ordered by score (descending) then canonical box key.
pub fn detect(grid: &BevGrid, model: &TemplateModel) -> Result<Vec<Detection>, DetectorError> {
    let maps = response_maps(grid, model)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let h = model.patch_size / 2;
    let mut candidates = Vec::new();
    if nx >= model.patch_size && ny >= model.patch_size {
        for (bi, map) in maps.iter().enumerate() {
            let bin = &model.bins[bi];
            for iy in h..ny - h {
                for ix in h..nx - h {
                    let s = map[iy * nx + ix];
                    if s < model.threshold || s <= 0.0 || !is_local_max(map, nx, ny, h, model.peak_radius_cells, ix, iy) {
                        continue;
                    }
                    let (x, y) = grid.spec.cell_center(ix, iy);
                    let bbox = OrientedBox::new(x, y, bin.cz, bin.length, bin.width, bin.height, bin.yaw)
                        .with_score(0.5 * (s + 1.0));
                    candidates.push(Detection { bbox, bin: bi, cell: (ix, iy), ncc: s });
                }
            }
        }
    }
    let boxes: Vec<OrientedBox> = candidates.iter().map(|d| d.bbox).collect();
    Ok(nms_indices(&boxes, model.nms_iou).into_iter().map(|i| candidates[i]).collect())
}

/// Maximum of its `(2r+1)²` neighborhood within the valid region. Ties go to
/// the earlier cell in row-major order, which keeps plateaus to one peak.
fn is_local_max(map: &[f64], nx: usize, ny: usize, h: usize, r: usize, ix: usize, iy: usize) -> bool {
    let i = iy * nx + ix;
    let s = map[i];
    for jy in iy.saturating_sub(r).max(h)..=(iy + r).min(ny - 1 - h) {
        for jx in ix.saturating_sub(r).max(h)..=(ix + r).min(nx - 1 - h) {
            let j = jy * nx + jx;
            if j != i && (map[j] > s || (map[j] == s && j < i)) {
                return false;
            }
        }
    }
    true
}

/// Greedy non-maximum suppression. Returns the kept boxes' indices in
/// `(score desc, canonical key)` order.
pub fn nms_indices(boxes: &[OrientedBox], iou_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(boxes[a].canonical_cmp(&boxes[b])));
    let radius = |b: &OrientedBox| 0.5 * b.length.hypot(b.width);
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let b = &boxes[i];
        let suppressed = kept.iter().any(|&k| {
            let o = &boxes[k];
            let d = (b.center_xy() - o.center_xy()).norm();
            d < radius(b) + radius(o) && bev_iou(b, o) > iou_thresh
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

pub fn nms(boxes: &[OrientedBox], iou_thresh: f64) -> Vec<OrientedBox> {
    nms_indices(boxes, iou_thresh).into_iter().map(|i| boxes[i]).collect()
}
