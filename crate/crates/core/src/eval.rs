//! Detection scoring: oriented-IoU average precision and distance-to-collision
//! (DTC) bucketed recall and precision.
//!
//! DTC variant implemented here: objects are static from the frame they are
//! observed in, the ego follows its own recorded path (piecewise linear between
//! manifest poses, heading interpolated along each segment), and the path is
//! walked in 0.1 m arc steps. The first step whose ego footprint overlaps the
//! object is refined by bisection against the previous step, so the reported
//! distance is the contact arc length rather than the next step boundary.

use nalgebra::Point2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{FramePose, LabelSet};
use crate::geometry::{bev_iou, box_to_polygon, convex_intersection_area, wrap_angle, OrientedBox};

pub const DTC_STEP_M: f64 = 0.1;
pub const DEFAULT_CAP_M: f64 = 100.0;
pub const DEFAULT_BUCKET_EDGES_M: [f64; 5] = [0.0, 10.0, 20.0, 40.0, 100.0];
/// Overlap areas at or below this (m²) count as touching, not colliding.
pub const OVERLAP_EPS_M2: f64 = 1e-9;

const DTC_VARIANT: &str =
    "static actors from observation frame; recorded ego path, piecewise linear; 0.1 m arc steps with bisection to contact";

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid DTC bucket edges {edges:?}: {reason}")]
    InvalidBuckets { edges: Vec<f64>, reason: String },
    #[error("invalid ego trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid IoU threshold {0}; must lie in (0, 1)")]
    InvalidIou(f64),
}

/// The recorded ego path in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoTrajectory {
    pub frame_ids: Vec<u64>,
    pub timestamps: Vec<f64>,
    /// World-frame `(x, y)` of each pose.
    pub positions: Vec<Point2<f64>>,
    pub yaws: Vec<f64>,
    pub ego_length_m: f64,
    pub ego_width_m: f64,
}

impl EgoTrajectory {
    /// Trajectory with the default 4 m × 2 m ego footprint.
    pub fn from_frames(frames: &[FramePose]) -> Result<Self, EvalError> {
        let mut ordered: Vec<&FramePose> = frames.iter().collect();
        ordered.sort_by_key(|f| f.frame_id);
        let traj = Self {
            frame_ids: ordered.iter().map(|f| f.frame_id).collect(),
            timestamps: ordered.iter().map(|f| f.timestamp).collect(),
            positions: ordered.iter().map(|f| Point2::new(f.pose.translation.x, f.pose.translation.y)).collect(),
            yaws: ordered.iter().map(|f| f.pose.yaw()).collect(),
            ego_length_m: 4.0,
            ego_width_m: 2.0,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn with_footprint(mut self, length_m: f64, width_m: f64) -> Self {
        self.ego_length_m = length_m;
        self.ego_width_m = width_m;
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let n = self.frame_ids.len();
        if n == 0 {
            return Err(EvalError::InvalidTrajectory("no poses".into()));
        }
        if self.timestamps.len() != n || self.positions.len() != n || self.yaws.len() != n {
            return Err(EvalError::InvalidTrajectory("field lengths differ".into()));
        }
        if self.timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(EvalError::InvalidTrajectory("timestamps not strictly increasing".into()));
        }
        if !(self.ego_length_m > 0.0 && self.ego_width_m > 0.0) {
            return Err(EvalError::InvalidTrajectory("ego footprint must be positive".into()));
        }
        Ok(())
    }

    pub fn index_of(&self, frame_id: u64) -> Option<usize> {
        self.frame_ids.binary_search(&frame_id).ok()
    }

    fn footprint(&self, at: Point2<f64>, yaw: f64) -> OrientedBox {
        OrientedBox::bev(at.x, at.y, self.ego_length_m, self.ego_width_m, yaw)
    }

    /// Ego position and heading after travelling `s` meters of path from pose `start`.
    /// Returns `None` past the end of the recorded path.
    pub fn pose_at_arc(&self, start: usize, s: f64) -> Option<(Point2<f64>, f64)> {
        if s <= 0.0 {
            return Some((self.positions[start], self.yaws[start]));
        }
        let mut walked = 0.0;
        for i in start..self.positions.len().saturating_sub(1) {
            let (a, b) = (self.positions[i], self.positions[i + 1]);
            let len = (b - a).norm();
            if len <= 0.0 {
                continue;
            }
            if walked + len >= s {
                let t = (s - walked) / len;
                let yaw = self.yaws[i] + t * wrap_angle(self.yaws[i + 1] - self.yaws[i]);
                return Some((a + (b - a) * t, yaw));
            }
            walked += len;
        }
        None
    }

    /// Arc length of the path from pose `start` to its end.
    pub fn remaining_length(&self, start: usize) -> f64 {
        self.positions[start..].windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

fn overlaps(traj: &EgoTrajectory, obj: &OrientedBox, reach: f64, at: Point2<f64>, yaw: f64) -> bool {
    if (obj.center_xy() - at).norm() > reach {
        return false;
    }
    let ego = box_to_polygon(&traj.footprint(at, yaw));
    convex_intersection_area(&ego, &box_to_polygon(obj)) > OVERLAP_EPS_M2
}

/// Distance the ego travels along its path from pose `start` before its
/// footprint first overlaps the static world-frame box `obj`, or `cap_m` if
/// that never happens within the remaining path or within `cap_m`.
pub fn distance_to_collision(traj: &EgoTrajectory, start: usize, obj: &OrientedBox, cap_m: f64) -> f64 {
    dtc_with_step(traj, start, obj, cap_m, DTC_STEP_M, true)
}

/// The stepping search behind [`distance_to_collision`] with an explicit step.
/// Without refinement the first overlapping step itself is returned.
pub fn dtc_with_step(traj: &EgoTrajectory, start: usize, obj: &OrientedBox, cap_m: f64, step_m: f64, refine: bool) -> f64 {
    assert!(cap_m > 0.0 && step_m > 0.0);
    let reach = 0.5 * (traj.ego_length_m.hypot(traj.ego_width_m) + obj.length.hypot(obj.width));
    let limit = traj.remaining_length(start).min(cap_m);
    let hit = |s: f64| traj.pose_at_arc(start, s).is_some_and(|(p, yaw)| overlaps(traj, obj, reach, p, yaw));
    if hit(0.0) {
        return 0.0;
    }
    let steps = (limit / step_m).floor() as usize;
    let mut prev = 0.0;
    for k in 1..=steps + 1 {
        let s = (k as f64 * step_m).min(limit);
        if hit(s) {
            if !refine {
                return s;
            }
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if hit(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi;
        }
        if s >= limit {
            break;
        }
        prev = s;
    }
    cap_m
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(detection index, gt index, iou)` in matching order.
    pub matches: Vec<(usize, usize, f64)>,
    pub unmatched_dets: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

fn score_order(dets: &[OrientedBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(dets[a].canonical_cmp(&dets[b])).then(a.cmp(&b)));
    order
}

/// Greedy one-to-one matching: detections in descending score each take the
/// unmatched ground truth of highest IoU, if that IoU is at least `iou_thresh`.
pub fn match_detections(dets: &[OrientedBox], gts: &[OrientedBox], iou_thresh: f64) -> MatchResult {
    let mut taken = vec![false; gts.len()];
    let mut result = MatchResult::default();
    for d in score_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = bev_iou(&dets[d], gt);
            if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) => {
                taken[g] = true;
                result.matches.push((d, g, iou));
            }
            None => result.unmatched_dets.push(d),
        }
    }
    result.unmatched_dets.sort_unstable();
    result.unmatched_gts = (0..gts.len()).filter(|&g| !taken[g]).collect();
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub iou_thresh: f64,
    pub ap: f64,
    pub det_count: usize,
    pub gt_count: usize,
    pub true_positives: usize,
    pub curve: Vec<PrPoint>,
}

fn frame_ids(dets: &LabelSet, gts: &LabelSet) -> Vec<u64> {
    let mut ids: Vec<u64> = dets.frames.keys().chain(gts.frames.keys()).copied().collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Area under the monotone precision envelope of a PR curve.
pub fn all_point_ap(curve: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in curve.iter().zip(&envelope) {
        ap += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    ap.clamp(0.0, 1.0)
}

/// AP pooled over all frames of both label sets. With no ground truth the AP is 0.
pub fn average_precision(dets: &LabelSet, gts: &LabelSet, iou_thresh: f64) -> ApResult {
    let mut scored: Vec<(f64, OrientedBox, bool)> = Vec::new();
    let mut gt_count = 0;
    for f in frame_ids(dets, gts) {
        let (d, g) = (dets.get(f), gts.get(f));
        gt_count += g.len();
        let m = match_detections(d, g, iou_thresh);
        let mut tp = vec![false; d.len()];
        for &(di, _, _) in &m.matches {
            tp[di] = true;
        }
        scored.extend(d.iter().zip(tp).map(|(b, t)| (b.score, *b, t)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.canonical_cmp(&b.1)));
    let mut curve = Vec::with_capacity(scored.len());
    let mut tp = 0usize;
    for (i, (score, _, is_tp)) in scored.iter().enumerate() {
        tp += usize::from(*is_tp);
        let recall = if gt_count > 0 { tp as f64 / gt_count as f64 } else { 0.0 };
        curve.push(PrPoint { score: *score, recall, precision: tp as f64 / (i + 1) as f64 });
    }
    let ap = if gt_count == 0 { 0.0 } else { all_point_ap(&curve) };
    ApResult { iou_thresh, ap, det_count: scored.len(), gt_count, true_positives: tp, curve }
}

/// True positives, false positives and ground-truth count at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub gt_count: usize,
}

impl MatchCounts {
    pub fn recall(&self) -> Option<f64> {
        (self.gt_count > 0).then(|| self.true_positives as f64 / self.gt_count as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let n = self.true_positives + self.false_positives;
        (n > 0).then(|| self.true_positives as f64 / n as f64)
    }
}

pub fn count_matches(dets: &LabelSet, gts: &LabelSet, iou_thresh: f64) -> MatchCounts {
    let mut c = MatchCounts::default();
    for f in frame_ids(dets, gts) {
        let m = match_detections(dets.get(f), gts.get(f), iou_thresh);
        c.true_positives += m.matches.len();
        c.false_positives += m.unmatched_dets.len();
        c.gt_count += gts.get(f).len();
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtcBucket {
    pub lo_m: f64,
    pub hi_m: f64,
    pub gt_count: usize,
    pub matched_gt: usize,
    pub det_count: usize,
    pub true_positives: usize,
    /// `None` when the bucket has no ground truth.
    pub recall: Option<f64>,
    /// `None` when the bucket has no detections.
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtcReport {
    pub variant: String,
    pub iou_thresh: f64,
    pub cap_m: f64,
    pub step_m: f64,
    pub ego_length_m: f64,
    pub ego_width_m: f64,
    pub buckets: Vec<DtcBucket>,
    /// Mean DTC of unmatched ground truth; `None` if every object was found.
    pub mean_missed_dtc_m: Option<f64>,
}

pub fn validate_buckets(edges: &[f64], cap_m: f64) -> Result<(), EvalError> {
    let bad = |reason: &str| Err(EvalError::InvalidBuckets { edges: edges.to_vec(), reason: reason.into() });
    if edges.len() < 2 {
        return bad("need at least two edges");
    }
    if edges[0] != 0.0 {
        return bad("first edge must be 0");
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return bad("edges must be strictly increasing");
    }
    if edges[edges.len() - 1] != cap_m {
        return bad("last edge must equal the DTC cap");
    }
    Ok(())
}

/// Bucket index for a DTC value; the last bucket includes its upper edge.
pub fn bucket_of(edges: &[f64], dtc: f64) -> usize {
    let n = edges.len() - 1;
    (0..n).find(|&i| dtc < edges[i + 1]).unwrap_or(n - 1)
}

/// World-frame DTC of every box in `labels`, per frame, aligned with the box lists.
pub fn label_dtcs(labels: &LabelSet, frames: &[FramePose], traj: &EgoTrajectory, cap_m: f64) -> Vec<(u64, Vec<f64>)> {
    let poses: std::collections::BTreeMap<u64, &FramePose> = frames.iter().map(|f| (f.frame_id, f)).collect();
    labels
        .frames
        .par_iter()
        .map(|(&f, boxes)| {
            let dtcs = match (poses.get(&f), traj.index_of(f)) {
                (Some(fp), Some(start)) => boxes
                    .iter()
                    .map(|b| distance_to_collision(traj, start, &fp.pose.transform_box(b), cap_m))
                    .collect(),
                _ => vec![cap_m; boxes.len()],
            };
            (f, dtcs)
        })
        .collect()
}

/// Recall and precision per DTC bucket. Ground truth falls in the bucket of
/// its DTC; every detection, matched or not, in the bucket of its own DTC.
pub fn dtc_bucketed_report(
    dets: &LabelSet,
    gts: &LabelSet,
    frames: &[FramePose],
    traj: &EgoTrajectory,
    bucket_edges_m: &[f64],
    iou_thresh: f64,
    cap_m: f64,
) -> Result<DtcReport, EvalError> {
    validate_buckets(bucket_edges_m, cap_m)?;
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(EvalError::InvalidIou(iou_thresh));
    }
    let gt_dtc: std::collections::BTreeMap<u64, Vec<f64>> = label_dtcs(gts, frames, traj, cap_m).into_iter().collect();
    let det_dtc: std::collections::BTreeMap<u64, Vec<f64>> = label_dtcs(dets, frames, traj, cap_m).into_iter().collect();
    let n = bucket_edges_m.len() - 1;
    let mut buckets: Vec<DtcBucket> = (0..n)
        .map(|i| DtcBucket {
            lo_m: bucket_edges_m[i],
            hi_m: bucket_edges_m[i + 1],
            gt_count: 0,
            matched_gt: 0,
            det_count: 0,
            true_positives: 0,
            recall: None,
            precision: None,
        })
        .collect();
    let mut missed = Vec::new();
    for f in frame_ids(dets, gts) {
        let m = match_detections(dets.get(f), gts.get(f), iou_thresh);
        let mut gt_hit = vec![false; gts.get(f).len()];
        let mut det_hit = vec![false; dets.get(f).len()];
        for &(d, g, _) in &m.matches {
            gt_hit[g] = true;
            det_hit[d] = true;
        }
        let empty = Vec::new();
        for (g, &dtc) in gt_dtc.get(&f).unwrap_or(&empty).iter().enumerate() {
            let b = &mut buckets[bucket_of(bucket_edges_m, dtc)];
            b.gt_count += 1;
            if gt_hit[g] {
                b.matched_gt += 1;
            } else {
                missed.push(dtc);
            }
        }
        for (d, &dtc) in det_dtc.get(&f).unwrap_or(&empty).iter().enumerate() {
            let b = &mut buckets[bucket_of(bucket_edges_m, dtc)];
            b.det_count += 1;
            b.true_positives += usize::from(det_hit[d]);
        }
    }
    for b in &mut buckets {
        b.recall = (b.gt_count > 0).then(|| b.matched_gt as f64 / b.gt_count as f64);
        b.precision = (b.det_count > 0).then(|| b.true_positives as f64 / b.det_count as f64);
    }
    let mean_missed_dtc_m = (!missed.is_empty()).then(|| missed.iter().sum::<f64>() / missed.len() as f64);
    Ok(DtcReport {
        variant: DTC_VARIANT.into(),
        iou_thresh,
        cap_m,
        step_m: DTC_STEP_M,
        ego_length_m: traj.ego_length_m,
        ego_width_m: traj.ego_width_m,
        buckets,
        mean_missed_dtc_m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// When set, boxes farther than this from the ego are dropped from both sides first.
    pub range_max_m: Option<f64>,
    pub dtc: bool,
    pub dtc_iou_thresh: f64,
    pub bucket_edges_m: Vec<f64>,
    pub cap_m: f64,
    pub ego_length_m: f64,
    pub ego_width_m: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: vec![0.3, 0.5],
            range_max_m: None,
            dtc: false,
            dtc_iou_thresh: 0.3,
            bucket_edges_m: DEFAULT_BUCKET_EDGES_M.to_vec(),
            cap_m: DEFAULT_CAP_M,
            ego_length_m: 4.0,
            ego_width_m: 2.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        for &t in self.iou_thresholds.iter().chain([&self.dtc_iou_thresh]) {
            if !(t > 0.0 && t < 1.0) {
                return Err(EvalError::InvalidIou(t));
            }
        }
        validate_buckets(&self.bucket_edges_m, self.cap_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub range_max_m: Option<f64>,
    pub ap: Vec<ApResult>,
    pub dtc: Option<DtcReport>,
}

pub fn evaluate(dets: &LabelSet, gts: &LabelSet, frames: &[FramePose], config: &EvalConfig) -> Result<EvalReport, EvalError> {
    config.validate()?;
    let (dets, gts) = match config.range_max_m {
        Some(r) => (dets.within_range(r), gts.within_range(r)),
        None => (dets.clone(), gts.clone()),
    };
    let ap = config.iou_thresholds.iter().map(|&t| average_precision(&dets, &gts, t)).collect();
    let dtc = if config.dtc {
        let traj = EgoTrajectory::from_frames(frames)?.with_footprint(config.ego_length_m, config.ego_width_m);
        traj.validate()?;
        Some(dtc_bucketed_report(&dets, &gts, frames, &traj, &config.bucket_edges_m, config.dtc_iou_thresh, config.cap_m)?)
    } else {
        None
    };
    Ok(EvalReport { range_max_m: config.range_max_m, ap, dtc })
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Fixed-width plain-text summary of a report.
pub fn format_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:>8} {:>8} {:>8} {:>8} {:>8}\n", "iou", "AP", "dets", "gt", "tp"));
    for a in &report.ap {
        out.push_str(&format!(
            "{:>8.2} {:>8.4} {:>8} {:>8} {:>8}\n",
            a.iou_thresh, a.ap, a.det_count, a.gt_count, a.true_positives
        ));
    }
    if let Some(d) = &report.dtc {
        out.push_str(&format!("\nDTC buckets (iou {:.2}, cap {} m)\n", d.iou_thresh, d.cap_m));
        out.push_str(&format!("{:>15} {:>8} {:>8} {:>8} {:>10}\n", "dtc_m", "gt", "dets", "recall", "precision"));
        let last = d.buckets.len().saturating_sub(1);
        for (i, b) in d.buckets.iter().enumerate() {
            let close = if i == last { ']' } else { ')' };
            let range = format!("[{}, {}{close}", b.lo_m, b.hi_m);
            out.push_str(&format!(
                "{:>15} {:>8} {:>8} {:>8} {:>10}\n",
                range,
                b.gt_count,
                b.det_count,
                fmt_rate(b.recall),
                fmt_rate(b.precision)
            ));
        }
        out.push_str(&format!("mean DTC of missed objects: {}\n", d.mean_missed_dtc_m.map_or("-".into(), |v| format!("{v:.2} m"))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use nalgebra::Vector3;

    fn straight(n: usize, spacing: f64) -> Vec<FramePose> {
        (0..n)
            .map(|k| FramePose {
                frame_id: k as u64,
                timestamp: k as f64 * 0.1,
                pose: Pose::from_yaw(0.0, Vector3::new(k as f64 * spacing, 0.0, 0.0)),
            })
            .collect()
    }

    #[test]
    fn straight_path_contact_distance() {
        let traj = EgoTrajectory::from_frames(&straight(61, 1.0)).unwrap();
        let obj = OrientedBox::bev(20.0, 0.0, 4.0, 2.0, 0.0);
        let d = distance_to_collision(&traj, 0, &obj, 100.0);
        assert!((d - 16.0).abs() < 1e-6, "{d}");
    }

    #[test]
    fn overlapping_and_lateral_objects() {
        let traj = EgoTrajectory::from_frames(&straight(61, 1.0)).unwrap();
        assert_eq!(distance_to_collision(&traj, 0, &OrientedBox::bev(1.0, 0.5, 4.0, 2.0, 0.3), 100.0), 0.0);
        assert_eq!(distance_to_collision(&traj, 0, &OrientedBox::bev(20.0, 50.0, 4.0, 2.0, 0.0), 100.0), 100.0);
        // Past the end of the recorded path counts as no collision.
        assert_eq!(distance_to_collision(&traj, 0, &OrientedBox::bev(90.0, 0.0, 4.0, 2.0, 0.0), 100.0), 100.0);
        // Within the path but beyond the cap.
        assert_eq!(distance_to_collision(&traj, 0, &OrientedBox::bev(40.0, 0.0, 4.0, 2.0, 0.0), 30.0), 30.0);
    }

    #[test]
    fn start_index_shifts_the_path() {
        let traj = EgoTrajectory::from_frames(&straight(61, 1.0)).unwrap();
        let obj = OrientedBox::bev(30.0, 0.0, 4.0, 2.0, 0.0);
        let d = distance_to_collision(&traj, 10, &obj, 100.0);
        assert!((d - 16.0).abs() < 1e-6, "{d}");
    }

    #[test]
    fn ap_perfect_and_empty() {
        let mut gts = LabelSet::new();
        gts.insert(0, vec![OrientedBox::bev(5.0, 0.0, 4.0, 2.0, 0.0), OrientedBox::bev(15.0, 3.0, 4.0, 2.0, 0.4)]);
        assert_eq!(average_precision(&gts, &gts, 0.5).ap, 1.0);
        assert_eq!(average_precision(&LabelSet::new(), &gts, 0.5).ap, 0.0);
        let none = average_precision(&gts, &LabelSet::new(), 0.5);
        assert_eq!((none.ap, none.det_count, none.true_positives), (0.0, 2, 0));
    }

    #[test]
    fn no_gt_means_all_false_positives() {
        let dets = [OrientedBox::bev(5.0, 0.0, 4.0, 2.0, 0.0)];
        let m = match_detections(&dets, &[], 0.5);
        assert!(m.matches.is_empty());
        assert_eq!(m.unmatched_dets, vec![0]);
    }

    #[test]
    fn bucket_validation_and_lookup() {
        assert!(validate_buckets(&DEFAULT_BUCKET_EDGES_M, 100.0).is_ok());
        assert!(validate_buckets(&[0.0, 20.0, 10.0, 100.0], 100.0).is_err());
        assert!(validate_buckets(&[0.0, 10.0, 50.0], 100.0).is_err());
        assert!(validate_buckets(&[0.0], 0.0).is_err());
        assert_eq!(bucket_of(&DEFAULT_BUCKET_EDGES_M, 0.0), 0);
        assert_eq!(bucket_of(&DEFAULT_BUCKET_EDGES_M, 10.0), 1);
        assert_eq!(bucket_of(&DEFAULT_BUCKET_EDGES_M, 100.0), 3);
    }

    #[test]
    fn format_table_lists_every_threshold() {
        let mut gts = LabelSet::new();
        gts.insert(0, vec![OrientedBox::bev(5.0, 0.0, 4.0, 2.0, 0.0)]);
        let frames = straight(5, 1.0);
        let config = EvalConfig { dtc: true, ..Default::default() };
        let report = evaluate(&gts, &gts, &frames, &config).unwrap();
        let table = format_table(&report);
        assert!(table.contains("0.30") && table.contains("0.50"));
        assert!(table.contains("DTC buckets"));
    }
}
