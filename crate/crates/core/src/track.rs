//! Multi-frame tracking and temporal-consistency filtering of per-frame boxes.
//!
//! Boxes are lifted into the world frame, linked by a constant-velocity
//! tracker with gated Hungarian assignment on centroid distance, and only
//! observations of tracks that persist for `min_track_len` frames survive the
//! filter. Confirmed tracks get per-track constant dimensions.

use std::collections::BTreeMap;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dataio::{FramePose, LabelSet};
use crate::geometry::OrientedBox;

pub mod hungarian;

pub use hungarian::{solve_gated, Assignment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackParams {
    /// Maximum world-frame centroid distance for an association.
    pub gate_m: f64,
    /// Consecutive unmatched frames a track survives.
    pub max_misses: usize,
    /// Observations needed before a track is confirmed.
    pub min_track_len: usize,
    /// Reserved for refit consistency checks; currently unused by the tracker.
    pub min_confirmed_overlap_iou: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self { gate_m: 3.0, max_misses: 2, min_track_len: 4, min_confirmed_overlap_iou: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub frame_id: u64,
    pub timestamp: f64,
    /// World-frame box.
    pub world: OrientedBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub observations: Vec<Observation>,
    pub state: TrackState,
    /// World-frame velocity estimate (m/s).
    pub velocity: Vector2<f64>,
    misses: usize,
}

impl Track {
    fn new(id: u64, obs: Observation) -> Self {
        Self { id, observations: vec![obs], state: TrackState::Tentative, velocity: Vector2::zeros(), misses: 0 }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    fn last(&self) -> &Observation {
        self.observations.last().expect("tracks are created with one observation")
    }

    /// Constant-velocity position at time `t`.
    pub fn predict(&self, t: f64) -> Point2<f64> {
        let last = self.last();
        last.world.center_xy() + self.velocity * (t - last.timestamp)
    }

    fn update_velocity(&mut self) {
        let n = self.observations.len();
        let window = n.min(3);
        if window < 2 {
            self.velocity = Vector2::zeros();
            return;
        }
        let first = &self.observations[n - window];
        let last = &self.observations[n - 1];
        let dt = last.timestamp - first.timestamp;
        self.velocity = if dt > 0.0 { (last.world.center_xy() - first.world.center_xy()) / dt } else { Vector2::zeros() };
    }
}

/// Gated minimum-cost one-to-one matching of track predictions to detections
/// by Euclidean distance. Pairs farther apart than `gate_m` are never matched.
pub fn associate(predicted: &[Point2<f64>], detections: &[Point2<f64>], gate_m: f64) -> Assignment {
    let costs: Vec<Vec<Option<f64>>> = predicted
        .iter()
        .map(|p| {
            detections
                .iter()
                .map(|d| {
                    let dist = (d - p).norm();
                    (dist <= gate_m).then_some(dist)
                })
                .collect()
        })
        .collect();
    solve_gated(&costs, predicted.len(), detections.len())
}

fn pose_lookup(frames: &[FramePose]) -> BTreeMap<u64, &FramePose> {
    frames.iter().map(|f| (f.frame_id, f)).collect()
}

/// Runs the tracker over every frame in `frames`, in frame order. Labels are
/// in per-frame ego coordinates. Returns all tracks ever created, by id.
pub fn run_tracker(labels: &LabelSet, frames: &[FramePose], params: &TrackParams) -> Vec<Track> {
    let mut ordered: Vec<&FramePose> = frames.iter().collect();
    ordered.sort_by_key(|f| f.frame_id);
    let mut tracks: Vec<Track> = Vec::new();
    let mut next_id = 0u64;

    for frame in ordered {
        let mut dets: Vec<OrientedBox> = labels.get(frame.frame_id).to_vec();
        dets.sort_by(|a, b| a.canonical_cmp(b));
        let world: Vec<OrientedBox> = dets.iter().map(|b| frame.pose.transform_box(b)).collect();

        let active: Vec<usize> =
            tracks.iter().enumerate().filter(|(_, t)| t.state != TrackState::Dead).map(|(i, _)| i).collect();
        let predicted: Vec<Point2<f64>> = active.iter().map(|&i| tracks[i].predict(frame.timestamp)).collect();
        let centers: Vec<Point2<f64>> = world.iter().map(OrientedBox::center_xy).collect();
        let assignment = associate(&predicted, &centers, params.gate_m);

        for &(ti, di) in &assignment.matches {
            let track = &mut tracks[active[ti]];
            track.observations.push(Observation {
                frame_id: frame.frame_id,
                timestamp: frame.timestamp,
                world: world[di].with_track_id(Some(track.id)),
            });
            track.misses = 0;
            track.update_velocity();
            if track.observations.len() >= params.min_track_len {
                track.state = TrackState::Confirmed;
            }
        }
        for &ti in &assignment.unmatched_rows {
            let track = &mut tracks[active[ti]];
            track.misses += 1;
            if track.misses > params.max_misses {
                track.state = TrackState::Dead;
            }
        }
        for &di in &assignment.unmatched_cols {
            let obs = Observation {
                frame_id: frame.frame_id,
                timestamp: frame.timestamp,
                world: world[di].with_track_id(Some(next_id)),
            };
            let mut track = Track::new(next_id, obs);
            if params.min_track_len <= 1 {
                track.state = TrackState::Confirmed;
            }
            tracks.push(track);
            next_id += 1;
        }
    }
    tracks
}

/// Confirmation is a property of length; dead tracks that once confirmed still count.
pub fn is_confirmed(track: &Track, params: &TrackParams) -> bool {
    track.observations.len() >= params.min_track_len.max(1)
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

/// Replaces every observation's dimensions with the per-track medians while
/// keeping the corner nearest the ego (at that observation's frame) fixed.
pub fn refine_track_size(track: &Track, frames: &[FramePose]) -> Track {
    let lookup = pose_lookup(frames);
    let mut ls: Vec<f64> = track.observations.iter().map(|o| o.world.length).collect();
    let mut ws: Vec<f64> = track.observations.iter().map(|o| o.world.width).collect();
    let mut hs: Vec<f64> = track.observations.iter().map(|o| o.world.height).collect();
    let (l, w, h) = (median(&mut ls), median(&mut ws), median(&mut hs));

    let mut refined = track.clone();
    for obs in &mut refined.observations {
        let b = obs.world;
        if b.length == l && b.width == w && b.height == h {
            continue;
        }
        let ego = lookup
            .get(&obs.frame_id)
            .map(|f| Point2::new(f.pose.translation.x, f.pose.translation.y))
            .unwrap_or_else(Point2::origin);
        let (u, v) = b.axes();
        let signs = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        let corner_of = |s: (f64, f64)| b.center_xy() + u * (s.0 * 0.5 * b.length) + v * (s.1 * 0.5 * b.width);
        let nearest = signs
            .iter()
            .copied()
            .min_by(|&a, &c| (corner_of(a) - ego).norm().total_cmp(&(corner_of(c) - ego).norm()))
            .expect("four corners");
        let corner = corner_of(nearest);
        let center = corner - u * (nearest.0 * 0.5 * l) - v * (nearest.1 * 0.5 * w);
        // cz keeps the box bottom in place.
        let bottom = b.cz - 0.5 * b.height;
        obs.world = OrientedBox { cx: center.x, cy: center.y, cz: bottom + 0.5 * h, length: l, width: w, height: h, ..b };
    }
    refined
}

/// Observations of confirmed tracks, back in per-frame ego coordinates. Every
/// frame in `frames` appears in the output (possibly with no boxes).
pub fn temporal_filter(tracks: &[Track], frames: &[FramePose], params: &TrackParams) -> LabelSet {
    let lookup = pose_lookup(frames);
    let mut labels = LabelSet::with_frames(frames.iter().map(|f| f.frame_id));
    let norm = 2.0 * params.min_track_len.max(1) as f64;
    for track in tracks.iter().filter(|t| is_confirmed(t, params)) {
        let score = (track.len() as f64 / norm).min(1.0);
        for obs in &track.observations {
            let Some(frame) = lookup.get(&obs.frame_id) else { continue };
            let ego = frame.pose.inverse().transform_box(&obs.world);
            labels.frames.entry(obs.frame_id).or_default().push(ego.with_score(score).with_track_id(Some(track.id)));
        }
    }
    for boxes in labels.frames.values_mut() {
        boxes.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    }
    labels
}

/// Tracker, per-track size refinement and confirmed-track filter in one pass.
pub fn track_and_filter(labels: &LabelSet, frames: &[FramePose], params: &TrackParams) -> LabelSet {
    let tracks: Vec<Track> = run_tracker(labels, frames, params)
        .iter()
        .map(|t| if is_confirmed(t, params) { refine_track_size(t, frames) } else { t.clone() })
        .collect();
    temporal_filter(&tracks, frames, params)
}
