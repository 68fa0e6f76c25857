//! On-disk formats: point files, sequence manifests, label sets and JSON documents.
//!
//! Point files (`*.oypc`) are little-endian binary:
//!
//! ```text
//! offset 0   4 bytes  ASCII magic "OYPC"
//! offset 4   u32      version (= 1)
//! offset 8   u32      point count N
//! offset 12  N × 16   records of 4 × f32: x, y, z, intensity
//! ```
//!
//! Manifests, models and reports are UTF-8 JSON. Labels are JSON-lines with one
//! object per frame: `{"frame_id":N,"boxes":[{"cx":..,"cy":..,"cz":..,"l":..,
//! "w":..,"h":..,"yaw":..,"score":..,"track_id":..}]}`, boxes in the ego frame of
//! their own frame.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrientedBox, Point3, PointCloud, Pose};

pub const POINT_MAGIC: &[u8; 4] = b"OYPC";
pub const POINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;
const RECORD_LEN: usize = 16;

/// Conventional manifest file name inside a sequence directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("malformed point {index} in {path}: non-finite coordinate")]
    MalformedPoint { path: PathBuf, index: usize },
    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },
    #[error("timestamps not strictly increasing at frame {frame_id}")]
    NonMonotonicTimestamps { frame_id: u64 },
    #[error("invalid pose for frame {frame_id}: rotation is not orthonormal")]
    InvalidPose { frame_id: u64 },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord { path: PathBuf, line: usize, reason: String },
    #[error("malformed json in {path}: {reason}")]
    MalformedJson { path: PathBuf, reason: String },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path, source: io::Error) -> DataError {
    if source.kind() == io::ErrorKind::NotFound {
        DataError::MissingFile(path.to_path_buf())
    } else {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

/// One manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: u64,
    pub timestamp_s: f64,
    /// Relative to the manifest's directory.
    pub point_file: String,
    /// 4x4 row-major `world_from_ego`.
    pub pose: [f64; 16],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub sequence_id: String,
    pub frame_count: u64,
    pub frames: Vec<FrameEntry>,
}

impl SequenceManifest {
    pub fn validate(&self, path: &Path) -> Result<()> {
        if self.frame_count != self.frames.len() as u64 {
            return Err(DataError::MalformedManifest {
                path: path.to_path_buf(),
                reason: format!("frame_count {} but {} frames listed", self.frame_count, self.frames.len()),
            });
        }
        let mut prev_ts = f64::NEG_INFINITY;
        for (i, f) in self.frames.iter().enumerate() {
            if f.frame_id != i as u64 {
                return Err(DataError::MalformedManifest {
                    path: path.to_path_buf(),
                    reason: format!("frame ids must be contiguous from 0; entry {i} has id {}", f.frame_id),
                });
            }
            if !f.timestamp_s.is_finite() || f.timestamp_s <= prev_ts {
                return Err(DataError::NonMonotonicTimestamps { frame_id: f.frame_id });
            }
            prev_ts = f.timestamp_s;
            if !Pose::from_row_major(&f.pose).is_valid() || f.pose[12..] != [0.0, 0.0, 0.0, 1.0] {
                return Err(DataError::InvalidPose { frame_id: f.frame_id });
            }
        }
        Ok(())
    }

    pub fn frame_poses(&self) -> Vec<FramePose> {
        self.frames
            .iter()
            .map(|f| FramePose { frame_id: f.frame_id, timestamp: f.timestamp_s, pose: Pose::from_row_major(&f.pose) })
            .collect()
    }
}

/// Ego pose and time of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePose {
    pub frame_id: u64,
    pub timestamp: f64,
    /// `world_from_ego`.
    pub pose: Pose,
}

/// A manifest together with its decoded sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub manifest: SequenceManifest,
    pub clouds: Vec<PointCloud>,
}

impl Sequence {
    pub fn empty(sequence_id: &str) -> Self {
        Self {
            manifest: SequenceManifest { sequence_id: sequence_id.to_string(), frame_count: 0, frames: vec![] },
            clouds: vec![],
        }
    }

    pub fn frame_poses(&self) -> Vec<FramePose> {
        self.manifest.frame_poses()
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// Per-frame boxes keyed by frame id, each in its own frame's ego coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelSet {
    pub frames: BTreeMap<u64, Vec<OrientedBox>>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// A label set with an empty box list for every given frame.
    pub fn with_frames(frame_ids: impl IntoIterator<Item = u64>) -> Self {
        Self { frames: frame_ids.into_iter().map(|f| (f, Vec::new())).collect() }
    }

    pub fn insert(&mut self, frame_id: u64, boxes: Vec<OrientedBox>) {
        self.frames.insert(frame_id, boxes);
    }

    pub fn get(&self, frame_id: u64) -> &[OrientedBox] {
        self.frames.get(&frame_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn box_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    /// True when no frame carries any box.
    pub fn is_empty(&self) -> bool {
        self.box_count() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[OrientedBox])> {
        self.frames.iter().map(|(&f, b)| (f, b.as_slice()))
    }

    /// Keeps only boxes whose center lies within `max_range` of the ego origin.
    pub fn within_range(&self, max_range: f64) -> LabelSet {
        self.filter(|b| b.range() <= max_range)
    }

    pub fn filter(&self, mut keep: impl FnMut(&OrientedBox) -> bool) -> LabelSet {
        LabelSet {
            frames: self.frames.iter().map(|(&f, bs)| (f, bs.iter().filter(|b| keep(b)).copied().collect())).collect(),
        }
    }

    pub fn mean_score(&self) -> Option<f64> {
        let n = self.box_count();
        (n > 0).then(|| self.frames.values().flatten().map(|b| b.score).sum::<f64>() / n as f64)
    }

    /// Every box valid and track ids unique within each frame.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (f, boxes) in &self.frames {
            let mut ids = HashSet::new();
            for b in boxes {
                if !b.is_valid() {
                    return Err(format!("frame {f}: invalid box {b:?}"));
                }
                if let Some(id) = b.track_id {
                    if !ids.insert(id) {
                        return Err(format!("frame {f}: duplicate track_id {id}"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    frame_id: u64,
    boxes: Vec<OrientedBox>,
}

/// Encodes points in the binary point-file layout. Coordinates are narrowed to f32.
pub fn encode_points(points: &[Point3]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + RECORD_LEN * points.len());
    buf.extend_from_slice(POINT_MAGIC);
    buf.extend_from_slice(&POINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        for v in [p.x, p.y, p.z, p.intensity] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

pub fn decode_points(bytes: &[u8], path: &Path) -> Result<Vec<Point3>> {
    let header_err = |reason: String| DataError::MalformedHeader { path: path.to_path_buf(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(header_err(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != POINT_MAGIC {
        return Err(header_err("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != POINT_VERSION {
        return Err(header_err(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * RECORD_LEN {
        return Err(header_err(format!(
            "header declares {count} points but body holds {} bytes ({} records)",
            body.len(),
            body.len() as f64 / RECORD_LEN as f64
        )));
    }
    body.chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(index, rec)| {
            let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
            let p = Point3::with_intensity(f(0), f(1), f(2), f(3));
            if p.is_finite() {
                Ok(p)
            } else {
                Err(DataError::MalformedPoint { path: path.to_path_buf(), index })
            }
        })
        .collect()
}

pub fn write_point_file(path: &Path, points: &[Point3]) -> Result<()> {
    fs::write(path, encode_points(points)).map_err(|e| io_err(path, e))
}

pub fn read_point_file(path: &Path) -> Result<Vec<Point3>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_points(&bytes, path)
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| DataError::MalformedJson { path: path.to_path_buf(), reason: e.to_string() })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::MalformedJson { path: path.to_path_buf(), reason: e.to_string() })
}

pub fn read_manifest(path: &Path) -> Result<SequenceManifest> {
    let manifest: SequenceManifest = read_json(path).map_err(|e| match e {
        DataError::MalformedJson { path, reason } => DataError::MalformedManifest { path, reason },
        other => other,
    })?;
    manifest.validate(path)?;
    Ok(manifest)
}

/// Accepts either a manifest file or a directory containing `manifest.json`.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Reads a manifest and every point file it references.
pub fn read_sequence(manifest_path: &Path) -> Result<Sequence> {
    let manifest_path = resolve_manifest_path(manifest_path);
    let manifest = read_manifest(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let clouds = manifest
        .frames
        .iter()
        .map(|f| {
            let points = read_point_file(&base.join(&f.point_file))?;
            Ok(PointCloud::new(f.frame_id, f.timestamp_s, points))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence { manifest, clouds })
}

/// Writes point files and `manifest.json` under `dir`, creating directories as needed.
pub fn write_sequence(dir: &Path, seq: &Sequence) -> Result<()> {
    seq.manifest.validate(&dir.join(MANIFEST_FILE))?;
    if seq.clouds.len() != seq.manifest.frames.len() {
        return Err(DataError::MalformedManifest {
            path: dir.join(MANIFEST_FILE),
            reason: format!("{} clouds for {} frames", seq.clouds.len(), seq.manifest.frames.len()),
        });
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (entry, cloud) in seq.manifest.frames.iter().zip(&seq.clouds) {
        let path = dir.join(&entry.point_file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        write_point_file(&path, &cloud.points)?;
    }
    write_json(&dir.join(MANIFEST_FILE), &seq.manifest)
}

pub fn write_labels(path: &Path, labels: &LabelSet) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (&frame_id, boxes) in &labels.frames {
        let line = serde_json::to_string(&FrameRecord { frame_id, boxes: boxes.clone() })
            .map_err(|e| DataError::MalformedJson { path: path.to_path_buf(), reason: e.to_string() })?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelSet> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut labels = LabelSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let record_err =
            |reason: String| DataError::MalformedRecord { path: path.to_path_buf(), line: line_no, reason };
        let line = line.map_err(|e| record_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
        if labels.frames.contains_key(&rec.frame_id) {
            return Err(record_err(format!("duplicate frame_id {}", rec.frame_id)));
        }
        let single = LabelSet { frames: BTreeMap::from([(rec.frame_id, rec.boxes)]) };
        single.validate().map_err(record_err)?;
        labels.frames.extend(single.frames);
    }
    Ok(labels)
}
