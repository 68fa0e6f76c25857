//! Deterministic synthetic LiDAR sequences with known ground truth.
//!
//! The simulated sensor is a single-beam azimuth scanner at the ego origin:
//! `rays_per_frame` rays at uniformly spaced azimuths, each returning the
//! nearest box surface it hits within range. Because every object is sampled by
//! rays, the number of returns on an object falls off roughly as `1/range`,
//! which is the near-dense / far-sparse structure the discovery pipeline relies
//! on. Ground returns are scattered over the disk at a fixed areal density and
//! kept only where no box occludes them.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`. Object placement uses stream 0 and frame `k` uses
//! stream `k + 1`, so frames can be generated in any order or in parallel.

use std::f64::consts::PI;

use nalgebra::{Point2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{FrameEntry, LabelSet, Sequence, SequenceManifest};
use crate::geometry::{box_to_polygon, convex_intersection_area, OrientedBox, Point3, PointCloud, Pose};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("could not place object {object} without overlap after {attempts} attempts")]
    InfeasiblePlacement { object: usize, attempts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub rays_per_frame: usize,
    pub max_range_m: f64,
    pub angular_noise_rad: f64,
    pub range_noise_m: f64,
    pub dropout_prob: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { rays_per_frame: 3600, max_range_m: 80.0, angular_noise_rad: 0.0, range_noise_m: 0.02, dropout_prob: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundConfig {
    /// Ground returns per square meter of the sensor disk.
    pub density_per_m2: f64,
    pub z_sigma_m: f64,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self { density_per_m2: 1.0, z_sigma_m: 0.02 }
    }
}

/// Spurious compact point blobs that appear for a single frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterConfig {
    /// Expected blobs per frame; the fractional part is a Bernoulli draw.
    pub rate_per_frame: f64,
    pub range_m: [f64; 2],
    pub points: [usize; 2],
    pub spread_m: f64,
    pub z_m: [f64; 2],
}

impl Default for ClutterConfig {
    fn default() -> Self {
        Self { rate_per_frame: 0.0, range_m: [6.0, 35.0], points: [15, 30], spread_m: 0.15, z_m: [0.4, 1.6] }
    }
}

/// An object pinned by the config instead of sampled. World frame at t = 0
/// (the ego starts at the origin facing +x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub x: f64,
    pub y: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
    #[serde(default)]
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub sequence_id: String,
    pub n_frames: usize,
    pub frame_dt_s: f64,
    /// Number of randomly placed objects (in addition to `objects`).
    pub n_objects: usize,
    pub objects: Vec<ObjectSpec>,
    pub length_m: [f64; 2],
    pub width_m: [f64; 2],
    pub height_m: [f64; 2],
    pub speed_mps: [f64; 2],
    /// Distance band from the ego position at the middle frame.
    pub placement_range_m: [f64; 2],
    /// Height of the object body above the ground plane.
    pub body_clearance_m: f64,
    /// Minimum BEV gap between any two footprints (and the ego) in every frame.
    pub min_gap_m: f64,
    pub ego_speed_mps: f64,
    pub ego_length_m: f64,
    pub ego_width_m: f64,
    /// Objects with fewer returns than this in a frame are left out of that
    /// frame's ground truth.
    pub min_gt_points: usize,
    pub sensor: SensorConfig,
    pub ground: GroundConfig,
    pub clutter: ClutterConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sequence_id: "synth".into(),
            n_frames: 20,
            frame_dt_s: 0.1,
            n_objects: 8,
            objects: vec![],
            length_m: [3.8, 5.0],
            width_m: [1.7, 2.1],
            height_m: [1.4, 1.9],
            speed_mps: [0.0, 8.0],
            placement_range_m: [8.0, 35.0],
            body_clearance_m: 0.5,
            min_gap_m: 1.0,
            ego_speed_mps: 5.0,
            ego_length_m: 4.0,
            ego_width_m: 2.0,
            min_gt_points: 5,
            sensor: SensorConfig::default(),
            ground: GroundConfig::default(),
            clutter: ClutterConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        let range_ok = |r: &[f64; 2], positive: bool| {
            r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && if positive { r[0] > 0.0 } else { r[0] >= 0.0 }
        };
        if !(self.frame_dt_s > 0.0 && self.frame_dt_s.is_finite()) {
            return bad("frame_dt_s must be positive");
        }
        if !range_ok(&self.length_m, true) || !range_ok(&self.width_m, true) || !range_ok(&self.height_m, true) {
            return bad("object dimension ranges must satisfy 0 < min <= max");
        }
        if self.width_m[1] > self.length_m[0] {
            return bad("width range must not exceed length range");
        }
        if !range_ok(&self.speed_mps, false) || !range_ok(&self.placement_range_m, false) {
            return bad("speed and placement ranges must satisfy 0 <= min <= max");
        }
        if self.sensor.rays_per_frame == 0 || !(self.sensor.max_range_m > 0.0) {
            return bad("sensor needs rays_per_frame >= 1 and max_range_m > 0");
        }
        if !(0.0..1.0).contains(&self.sensor.dropout_prob) {
            return bad("dropout_prob must lie in [0, 1)");
        }
        if self.sensor.angular_noise_rad < 0.0 || self.sensor.range_noise_m < 0.0 || self.ground.z_sigma_m < 0.0 {
            return bad("noise levels must be non-negative");
        }
        if self.ground.density_per_m2 < 0.0 || self.clutter.rate_per_frame < 0.0 {
            return bad("densities and rates must be non-negative");
        }
        if !range_ok(&self.clutter.range_m, false)
            || self.clutter.points[0] > self.clutter.points[1]
            || self.clutter.z_m[0] > self.clutter.z_m[1]
        {
            return bad("clutter ranges must satisfy min <= max");
        }
        if self.ego_length_m <= 0.0 || self.ego_width_m <= 0.0 || self.body_clearance_m < 0.0 || self.min_gap_m < 0.0 {
            return bad("ego footprint must be positive; clearance and gap non-negative");
        }
        for o in &self.objects {
            if !(o.length >= o.width && o.width > 0.0 && o.height > 0.0) {
                return bad("explicit objects need length >= width > 0 and height > 0");
            }
        }
        Ok(())
    }

    pub fn ego_pose(&self, frame: usize) -> Pose {
        let t = frame as f64 * self.frame_dt_s;
        Pose::from_yaw(0.0, Vector3::new(self.ego_speed_mps * t, 0.0, 0.0))
    }

    fn ego_box(&self, frame: usize) -> OrientedBox {
        let p = self.ego_pose(frame).translation;
        OrientedBox::bev(p.x, p.y, self.ego_length_m, self.ego_width_m, 0.0)
    }
}

/// A simulated rigid object moving at constant velocity along its heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u64,
    /// World-frame box at t = 0.
    pub initial: OrientedBox,
    pub velocity: [f64; 2],
}

impl SceneObject {
    pub fn box_at(&self, t: f64) -> OrientedBox {
        OrientedBox {
            cx: self.initial.cx + self.velocity[0] * t,
            cy: self.initial.cy + self.velocity[1] * t,
            ..self.initial
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    Object(u64),
    Ground,
    Clutter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Ego-frame boxes per frame, `track_id` = object id.
    pub labels: LabelSet,
    pub poses: Vec<Pose>,
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub sequence: Sequence,
    pub ground_truth: GroundTruth,
    /// Provenance of every point, parallel to `sequence.clouds[k].points`.
    pub sources: Vec<Vec<PointSource>>,
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma is finite and positive").sample(rng)
    } else {
        0.0
    }
}

fn inflate(b: &OrientedBox, margin: f64) -> OrientedBox {
    OrientedBox { length: b.length + margin, width: b.width + margin, ..*b }
}

fn footprints_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    convex_intersection_area(&box_to_polygon(a), &box_to_polygon(b)) > 0.0
}

/// Distance along a ray from `origin` in direction `dir` (unit) to the first
/// point of the box footprint, or `None` if the ray misses. An origin inside
/// the footprint hits at distance 0.
pub fn ray_box_distance(origin: Point2<f64>, dir: Vector2<f64>, b: &OrientedBox) -> Option<f64> {
    let (u, v) = b.axes();
    let rel = origin - b.center_xy();
    let o = [rel.dot(&u), rel.dot(&v)];
    let d = [dir.dot(&u), dir.dot(&v)];
    let half = [0.5 * b.length, 0.5 * b.width];
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for k in 0..2 {
        if d[k].abs() < 1e-15 {
            if o[k].abs() > half[k] {
                return None;
            }
        } else {
            let t1 = (-half[k] - o[k]) / d[k];
            let t2 = (half[k] - o[k]) / d[k];
            t_enter = t_enter.max(t1.min(t2));
            t_exit = t_exit.min(t1.max(t2));
        }
    }
    if t_enter > t_exit || t_exit < 0.0 {
        return None;
    }
    Some(t_enter.max(0.0))
}

fn ray_direction(index: usize, rays: usize) -> f64 {
    2.0 * PI * index as f64 / rays as f64
}

/// Number of uniform-azimuth rays from `origin` that hit `b` within `max_range`.
pub fn expected_hits(b: &OrientedBox, origin: Point2<f64>, rays_per_frame: usize, max_range: f64) -> usize {
    (0..rays_per_frame)
        .filter(|&i| {
            let (s, c) = ray_direction(i, rays_per_frame).sin_cos();
            ray_box_distance(origin, Vector2::new(c, s), b).is_some_and(|t| t <= max_range)
        })
        .count()
}

fn nearest_hit(dir: Vector2<f64>, boxes: &[OrientedBox], max_range: f64) -> Option<(usize, f64)> {
    let origin = Point2::origin();
    boxes
        .iter()
        .enumerate()
        .filter_map(|(i, b)| ray_box_distance(origin, dir, b).map(|t| (i, t)))
        .filter(|&(_, t)| t <= max_range)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

fn place_objects(config: &SceneConfig) -> Result<Vec<SceneObject>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let times: Vec<f64> = (0..config.n_frames.max(1)).map(|k| k as f64 * config.frame_dt_s).collect();
    let ego_boxes: Vec<OrientedBox> =
        (0..config.n_frames.max(1)).map(|k| inflate(&config.ego_box(k), config.min_gap_m)).collect();
    let mid = config.ego_pose(config.n_frames / 2).translation;

    let mut placed: Vec<SceneObject> = Vec::new();
    let fits = |cand: &SceneObject, placed: &[SceneObject]| {
        times.iter().zip(&ego_boxes).all(|(&t, ego)| {
            let b = inflate(&cand.box_at(t), config.min_gap_m);
            !footprints_overlap(&b, ego)
                && placed.iter().all(|o| !footprints_overlap(&b, &inflate(&o.box_at(t), config.min_gap_m)))
        })
    };

    for spec in &config.objects {
        let id = placed.len() as u64;
        let cz = config.body_clearance_m + 0.5 * spec.height;
        let initial = OrientedBox::new(spec.x, spec.y, cz, spec.length, spec.width, spec.height, spec.yaw)
            .with_track_id(Some(id));
        let velocity = [spec.speed_mps * spec.yaw.cos(), spec.speed_mps * spec.yaw.sin()];
        let obj = SceneObject { id, initial, velocity };
        if !fits(&obj, &placed) {
            return Err(SynthError::InfeasiblePlacement { object: id as usize, attempts: 1 });
        }
        placed.push(obj);
    }

    for _ in 0..config.n_objects {
        let id = placed.len() as u64;
        let mut accepted = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let length = uniform(&mut rng, config.length_m);
            let width = uniform(&mut rng, config.width_m).min(length);
            let height = uniform(&mut rng, config.height_m);
            let heading = uniform(&mut rng, [-PI, PI]);
            let speed = uniform(&mut rng, config.speed_mps);
            let r = uniform(&mut rng, config.placement_range_m);
            let bearing = uniform(&mut rng, [-PI, PI]);
            // Positioned relative to the mid-sequence ego; shifted back so the
            // object is at that spot at the middle frame.
            let t_mid = (config.n_frames / 2) as f64 * config.frame_dt_s;
            let velocity = [speed * heading.cos(), speed * heading.sin()];
            let x = mid.x + r * bearing.cos() - velocity[0] * t_mid;
            let y = mid.y + r * bearing.sin() - velocity[1] * t_mid;
            let cz = config.body_clearance_m + 0.5 * height;
            let initial = OrientedBox::new(x, y, cz, length, width, height, heading).with_track_id(Some(id));
            let cand = SceneObject { id, initial, velocity };
            if fits(&cand, &placed) {
                accepted = Some(cand);
                break;
            }
        }
        match accepted {
            Some(obj) => placed.push(obj),
            None => {
                return Err(SynthError::InfeasiblePlacement { object: id as usize, attempts: MAX_PLACEMENT_ATTEMPTS })
            }
        }
    }
    Ok(placed)
}

struct Frame {
    cloud: PointCloud,
    sources: Vec<PointSource>,
    labels: Vec<OrientedBox>,
}

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

fn render_frame(config: &SceneConfig, objects: &[SceneObject], k: usize) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(k as u64 + 1);
    let t = k as f64 * config.frame_dt_s;
    let ego_from_world = config.ego_pose(k).inverse();
    let boxes: Vec<OrientedBox> = objects.iter().map(|o| ego_from_world.transform_box(&o.box_at(t))).collect();
    let sensor = &config.sensor;
    let n_rays = sensor.rays_per_frame;

    let mut points = Vec::new();
    let mut sources = Vec::new();
    let mut hits = vec![0usize; boxes.len()];
    let mut occlusion = vec![f64::INFINITY; n_rays];

    for (i, occ) in occlusion.iter_mut().enumerate() {
        let nominal = ray_direction(i, n_rays);
        let (s, c) = nominal.sin_cos();
        if let Some((_, tn)) = nearest_hit(Vector2::new(c, s), &boxes, sensor.max_range_m) {
            *occ = tn;
        }
        let azimuth = nominal + normal(&mut rng, sensor.angular_noise_rad);
        let dropped = rng.random::<f64>() < sensor.dropout_prob;
        let range_noise = normal(&mut rng, sensor.range_noise_m);
        let z_frac = rng.random::<f64>();
        let (s, c) = azimuth.sin_cos();
        let Some((bi, dist)) = nearest_hit(Vector2::new(c, s), &boxes, sensor.max_range_m) else {
            continue;
        };
        if dropped {
            continue;
        }
        let b = &boxes[bi];
        let r = dist + range_noise;
        let z = b.cz - 0.5 * b.height + z_frac * b.height;
        points.push(Point3::new(quantize(r * c), quantize(r * s), quantize(z)));
        sources.push(PointSource::Object(objects[bi].id));
        hits[bi] += 1;
    }

    let r_max = sensor.max_range_m;
    let n_ground = (config.ground.density_per_m2 * PI * r_max * r_max).round() as usize;
    let ego_fp = box_to_polygon(&OrientedBox::bev(0.0, 0.0, config.ego_length_m, config.ego_width_m, 0.0));
    for _ in 0..n_ground {
        let ray = rng.random_range(0..n_rays);
        let r = r_max * rng.random::<f64>().sqrt();
        let z = normal(&mut rng, config.ground.z_sigma_m);
        let dropped = rng.random::<f64>() < sensor.dropout_prob;
        if dropped || r >= occlusion[ray] {
            continue;
        }
        let (s, c) = ray_direction(ray, n_rays).sin_cos();
        let xy = Point2::new(r * c, r * s);
        if ego_fp.contains(&xy) {
            continue;
        }
        points.push(Point3::new(quantize(xy.x), quantize(xy.y), quantize(z)));
        sources.push(PointSource::Ground);
    }

    let rate = config.clutter.rate_per_frame;
    let extra = rng.random::<f64>() < rate.fract();
    let n_clutter = rate.floor() as usize + usize::from(extra);
    for _ in 0..n_clutter {
        let mut center = None;
        for _ in 0..100 {
            let r = uniform(&mut rng, config.clutter.range_m);
            let bearing = uniform(&mut rng, [-PI, PI]);
            let c = Point2::new(r * bearing.cos(), r * bearing.sin());
            let clear = boxes.iter().all(|b| !box_to_polygon(&inflate(b, 3.0)).contains(&c));
            if clear {
                center = Some(c);
                break;
            }
        }
        let Some(c) = center else { continue };
        let [lo, hi] = config.clutter.points;
        let n = rng.random_range(lo..=hi);
        for _ in 0..n {
            let x = c.x + normal(&mut rng, config.clutter.spread_m);
            let y = c.y + normal(&mut rng, config.clutter.spread_m);
            let z = uniform(&mut rng, config.clutter.z_m);
            points.push(Point3::new(quantize(x), quantize(y), quantize(z)));
            sources.push(PointSource::Clutter);
        }
    }

    let labels = boxes
        .iter()
        .zip(&hits)
        .filter(|(b, &h)| h >= config.min_gt_points.max(1) && b.range() <= sensor.max_range_m)
        .map(|(b, _)| *b)
        .collect();

    Frame { cloud: PointCloud::new(k as u64, t, points), sources, labels }
}

/// Generates a full sequence with ground truth. Pure in `config`.
pub fn generate(config: &SceneConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let objects = place_objects(config)?;
    let frames: Vec<Frame> = (0..config.n_frames).into_par_iter().map(|k| render_frame(config, &objects, k)).collect();

    let poses: Vec<Pose> = (0..config.n_frames).map(|k| config.ego_pose(k)).collect();
    let manifest = SequenceManifest {
        sequence_id: config.sequence_id.clone(),
        frame_count: config.n_frames as u64,
        frames: frames
            .iter()
            .zip(&poses)
            .map(|(f, pose)| FrameEntry {
                frame_id: f.cloud.frame_id,
                timestamp_s: f.cloud.timestamp,
                point_file: format!("frames/{:06}.oypc", f.cloud.frame_id),
                pose: pose.to_row_major(),
            })
            .collect(),
    };
    let mut labels = LabelSet::new();
    let mut clouds = Vec::with_capacity(frames.len());
    let mut sources = Vec::with_capacity(frames.len());
    for f in frames {
        labels.insert(f.cloud.frame_id, f.labels);
        clouds.push(f.cloud);
        sources.push(f.sources);
    }
    Ok(SynthOutput {
        sequence: Sequence { manifest, clouds },
        ground_truth: GroundTruth { labels, poses, objects },
        sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(objects: Vec<ObjectSpec>) -> SceneConfig {
        SceneConfig {
            n_frames: 1,
            n_objects: 0,
            objects,
            ego_speed_mps: 0.0,
            sensor: SensorConfig {
                rays_per_frame: 2000,
                max_range_m: 80.0,
                angular_noise_rad: 0.0,
                range_noise_m: 0.0,
                dropout_prob: 0.0,
            },
            ground: GroundConfig { density_per_m2: 0.0, z_sigma_m: 0.0 },
            clutter: ClutterConfig { rate_per_frame: 0.0, ..Default::default() },
            ..Default::default()
        }
    }

    fn car_at(x: f64) -> ObjectSpec {
        ObjectSpec { x, y: 0.0, length: 4.0, width: 2.0, height: 1.5, yaw: 0.0, speed_mps: 0.0 }
    }

    /// Ray–footprint distance by intersecting the ray with each of the four edges.
    fn edge_oracle(dir: Vector2<f64>, b: &OrientedBox) -> Option<f64> {
        let c = b.corners();
        (0..4)
            .filter_map(|i| {
                let p = c[i];
                let e = c[(i + 1) % 4] - p;
                let denom = dir.x * e.y - dir.y * e.x;
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (p.x * e.y - p.y * e.x) / denom;
                let s = (p.x * dir.y - p.y * dir.x) / denom;
                (t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s)).then_some(t)
            })
            .min_by(f64::total_cmp)
    }

    fn distance_to_boundary(p: Point2<f64>, b: &OrientedBox) -> f64 {
        let (u, v) = b.axes();
        let rel = p - b.center_xy();
        let a = rel.dot(&u).abs() - 0.5 * b.length;
        let c = rel.dot(&v).abs() - 0.5 * b.width;
        if a <= 0.0 && c <= 0.0 {
            a.max(c).abs()
        } else {
            a.max(0.0).hypot(c.max(0.0))
        }
    }

    #[test]
    fn empty_scene_has_no_points() {
        let mut cfg = quiet(vec![]);
        cfg.n_frames = 5;
        let out = generate(&cfg).unwrap();
        assert!(out.sequence.clouds.iter().all(|c| c.is_empty()));
        assert_eq!(out.sequence.clouds.len(), 5);
    }

    #[test]
    fn static_object_points_lie_on_surface() {
        let cfg = quiet(vec![car_at(10.0)]);
        let out = generate(&cfg).unwrap();
        let b = out.ground_truth.labels.get(0)[0];
        let cloud = &out.sequence.clouds[0];
        assert!(!cloud.is_empty());
        for p in &cloud.points {
            assert!(distance_to_boundary(p.xy(), &b) <= 1e-6, "{p:?}");
            assert!(p.z >= b.cz - 0.5 * b.height - 1e-6 && p.z <= b.cz + 0.5 * b.height + 1e-6);
        }
        let oracle = (0..2000)
            .filter(|&i| {
                let (s, c) = ray_direction(i, 2000).sin_cos();
                edge_oracle(Vector2::new(c, s), &b).is_some_and(|t| t <= 80.0)
            })
            .count();
        assert_eq!(cloud.len(), oracle);
        assert_eq!(expected_hits(&b, Point2::origin(), 2000, 80.0), oracle);
    }

    #[test]
    fn hit_count_halves_with_double_range() {
        let near = generate(&quiet(vec![car_at(10.0)])).unwrap().sequence.clouds[0].len() as f64;
        let far = generate(&quiet(vec![car_at(20.0)])).unwrap().sequence.clouds[0].len() as f64;
        let ratio = far / near;
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn expected_hits_edge_cases() {
        let b = OrientedBox::bev(100.0, 0.0, 4.0, 2.0, 0.0);
        assert_eq!(expected_hits(&b, Point2::origin(), 3600, 80.0), 0);
        let huge = OrientedBox::bev(0.0, 0.0, 500.0, 500.0, 0.3);
        assert_eq!(expected_hits(&huge, Point2::origin(), 3600, 80.0), 3600);
    }

    #[test]
    fn expected_hits_matches_subtended_arc() {
        for (x, y, yaw) in [(15.0, 4.0, 0.3), (-22.0, 9.0, 1.1), (5.0, -30.0, -0.7), (40.0, 0.5, 0.0)] {
            let b = OrientedBox::bev(x, y, 4.5, 1.9, yaw);
            let bearing = y.atan2(x);
            let rel: Vec<f64> =
                b.corners().iter().map(|c| crate::geometry::wrap_angle(c.y.atan2(c.x) - bearing)).collect();
            let theta = rel.iter().cloned().fold(f64::MIN, f64::max) - rel.iter().cloned().fold(f64::MAX, f64::min);
            let n = 3600;
            let expected = (n as f64 * theta / (2.0 * PI)).round() as i64;
            let got = expected_hits(&b, Point2::origin(), n, 200.0) as i64;
            assert!((got - expected).abs() <= 1, "got {got} expected {expected}");
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = SceneConfig { seed: 42, n_frames: 3, clutter: ClutterConfig { rate_per_frame: 1.5, ..Default::default() }, ..Default::default() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        for (ca, cb) in a.sequence.clouds.iter().zip(&b.sequence.clouds) {
            assert_eq!(crate::dataio::encode_points(&ca.points), crate::dataio::encode_points(&cb.points));
        }
        assert_eq!(a.ground_truth, b.ground_truth);
        let c = generate(&SceneConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.sequence.clouds[0], c.sequence.clouds[0]);
    }

    #[test]
    fn nearest_surface_wins_every_ray() {
        let cfg = SceneConfig {
            seed: 7,
            n_frames: 4,
            n_objects: 12,
            sensor: SensorConfig { angular_noise_rad: 0.0, range_noise_m: 0.0, dropout_prob: 0.0, ..Default::default() },
            ..Default::default()
        };
        let out = generate(&cfg).unwrap();
        for (k, cloud) in out.sequence.clouds.iter().enumerate() {
            let t = k as f64 * cfg.frame_dt_s;
            let inv = cfg.ego_pose(k).inverse();
            let boxes: Vec<OrientedBox> =
                out.ground_truth.objects.iter().map(|o| inv.transform_box(&o.box_at(t))).collect();
            for (p, src) in cloud.points.iter().zip(&out.sources[k]) {
                let r = p.x.hypot(p.y);
                let dir = Vector2::new(p.x / r, p.y / r);
                let nearest = boxes.iter().filter_map(|b| edge_oracle(dir, b)).fold(f64::INFINITY, f64::min);
                match src {
                    PointSource::Object(_) => assert!((r - nearest).abs() < 1e-4, "frame {k}: {r} vs {nearest}"),
                    PointSource::Ground => assert!(r <= nearest + 1e-4),
                    PointSource::Clutter => unreachable!(),
                }
            }
        }
    }

    #[test]
    fn overlapping_explicit_objects_are_infeasible() {
        let cfg = quiet(vec![car_at(10.0), car_at(11.0)]);
        assert!(matches!(generate(&cfg), Err(SynthError::InfeasiblePlacement { .. })));
        let crowded = SceneConfig { n_objects: 200, placement_range_m: [8.0, 10.0], ..quiet(vec![]) };
        assert!(matches!(generate(&crowded), Err(SynthError::InfeasiblePlacement { .. })));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = SceneConfig::default();
        cfg.sensor.dropout_prob = 1.0;
        assert!(matches!(cfg.validate(), Err(SynthError::InvalidConfig(_))));
        let cfg = SceneConfig { length_m: [5.0, 4.0], ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ground_truth_boxes_never_overlap() {
        let cfg = SceneConfig { seed: 3, n_objects: 10, ..Default::default() };
        let out = generate(&cfg).unwrap();
        for (_, boxes) in out.ground_truth.labels.iter() {
            for (i, a) in boxes.iter().enumerate() {
                assert!(!footprints_overlap(a, &OrientedBox::bev(0.0, 0.0, 4.0, 2.0, 0.0)));
                for b in &boxes[i + 1..] {
                    assert!(!footprints_overlap(a, b));
                }
            }
        }
    }
}
