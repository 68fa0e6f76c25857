//! Round orchestration: zero-shot labels from clustering, then repeated
//! train → detect → track-filter rounds, each trained on the previous round's
//! filtered labels.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfit::fit_cluster_box;
use crate::cluster::{dbscan_bev, ClusterParams};
use crate::dataio::{self, DataError, LabelSet, Sequence};
use crate::detector::{detect, rasterize_bev, train_templates, BevGrid, DetectorError, TemplateModel};
use crate::geometry::{OrientedBox, PointCloud};
use crate::ground::strip_ground;
use crate::params::PipelineParams;
use crate::track::track_and_filter;

#[derive(Debug, Error)]
pub enum SelfTrainError {
    #[error("round {round}: no training labels within {near_range_m} m (last completed round: {last_completed:?})")]
    NoLabels { round: usize, near_range_m: f64, last_completed: Option<usize>, completed: Vec<RoundArtifacts> },
    #[error("invalid round config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundConfig {
    pub n_rounds: usize,
    /// Near-range radius per round; round `r` uses entry `r`, the last entry repeats.
    pub near_range_schedule_m: Vec<f64>,
    pub params: PipelineParams,
    /// Recorded with every round. The pipeline itself draws no random numbers.
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self { n_rounds: 3, near_range_schedule_m: vec![40.0, 60.0, 80.0], params: PipelineParams::default(), seed: 0 }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<(), SelfTrainError> {
        let bad = |m: &str| Err(SelfTrainError::InvalidConfig(m.into()));
        if self.n_rounds == 0 {
            return bad("n_rounds must be >= 1");
        }
        if self.near_range_schedule_m.is_empty() {
            return bad("near_range_schedule_m is empty");
        }
        if self.near_range_schedule_m.iter().any(|r| !(*r > 0.0)) {
            return bad("near-range values must be positive");
        }
        if self.near_range_schedule_m.windows(2).any(|w| w[1] < w[0]) {
            return bad("near_range_schedule_m must be non-decreasing");
        }
        self.params.validate().map_err(SelfTrainError::InvalidConfig)
    }

    pub fn near_range(&self, round: usize) -> f64 {
        let s = &self.near_range_schedule_m;
        s[round.min(s.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub seed: u64,
    pub near_range_m: f64,
    pub training_label_count: usize,
    pub label_count: usize,
    pub mean_score: Option<f64>,
    pub template_bins: usize,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundArtifacts {
    pub round: usize,
    /// Labels the round's model was trained on; empty for round 0.
    pub training_labels: LabelSet,
    /// `None` for round 0, which uses no model.
    pub model: Option<TemplateModel>,
    /// Temporally filtered output labels.
    pub labels: LabelSet,
    pub summary: RoundSummary,
}

/// Unfiltered zero-shot boxes of one sweep: ground removal, near-range
/// clustering and a box fit per cluster.
pub fn frame_boxes(cloud: &PointCloud, params: &PipelineParams, near_range_m: f64) -> Vec<OrientedBox> {
    let objects = strip_ground(cloud, &params.ground);
    let cluster_params = ClusterParams { near_range_m, ..params.cluster.clone() };
    dbscan_bev(&objects, &cluster_params)
        .iter()
        .filter_map(|c| {
            let pts: Vec<_> = c.points(&objects).copied().collect();
            fit_cluster_box(&pts, &params.boxfit).ok()
        })
        .collect()
}

/// Per-frame cluster boxes before any temporal filtering.
pub fn raw_round_zero(seq: &Sequence, params: &PipelineParams, near_range_m: f64) -> LabelSet {
    let per_frame: Vec<(u64, Vec<OrientedBox>)> =
        seq.clouds.par_iter().map(|c| (c.frame_id, frame_boxes(c, params, near_range_m))).collect();
    LabelSet { frames: per_frame.into_iter().collect() }
}

/// Zero-shot labels: cluster boxes within `params.cluster.near_range_m`,
/// tracked, size-refined and filtered for temporal consistency.
pub fn round_zero(seq: &Sequence, params: &PipelineParams) -> LabelSet {
    let raw = raw_round_zero(seq, params, params.cluster.near_range_m);
    track_and_filter(&raw, &seq.frame_poses(), &params.track)
}

/// Ground-stripped BEV grids of every frame, in sequence order.
pub fn sequence_grids(seq: &Sequence, params: &PipelineParams) -> Vec<BevGrid> {
    seq.clouds
        .par_iter()
        .map(|c| rasterize_bev(&strip_ground(c, &params.ground), &params.detector.grid))
        .collect()
}

/// Trains on `labels` (ego frame per frame id) restricted to `train_range_m`.
pub fn train_on_grids(
    seq: &Sequence,
    grids: &[BevGrid],
    labels: &LabelSet,
    params: &PipelineParams,
    train_range_m: f64,
) -> Result<TemplateModel, DetectorError> {
    let samples: Vec<(&BevGrid, &[OrientedBox])> =
        seq.clouds.iter().zip(grids).map(|(c, g)| (g, labels.get(c.frame_id))).collect();
    let detector = crate::detector::DetectorParams { train_range_m, ..params.detector.clone() };
    train_templates(&samples, &detector)
}

/// Raw detector output per frame.
pub fn detect_on_grids(seq: &Sequence, grids: &[BevGrid], model: &TemplateModel) -> Result<LabelSet, DetectorError> {
    let per_frame: Vec<(u64, Vec<OrientedBox>)> = seq
        .clouds
        .par_iter()
        .zip(grids.par_iter())
        .map(|(c, g)| Ok((c.frame_id, detect(g, model)?.into_iter().map(|d| d.bbox).collect())))
        .collect::<Result<_, DetectorError>>()?;
    Ok(LabelSet { frames: per_frame.into_iter().collect() })
}

/// Raw detections for a whole sequence.
pub fn detect_sequence(seq: &Sequence, model: &TemplateModel, params: &PipelineParams) -> Result<LabelSet, DetectorError> {
    let grid_params = PipelineParams {
        detector: crate::detector::DetectorParams { grid: model.spec, ..params.detector.clone() },
        ..params.clone()
    };
    detect_on_grids(seq, &sequence_grids(seq, &grid_params), model)
}

fn summarize(round: usize, config: &RoundConfig, training: &LabelSet, model: Option<&TemplateModel>, labels: &LabelSet) -> RoundSummary {
    RoundSummary {
        round,
        seed: config.seed,
        near_range_m: config.near_range(round),
        training_label_count: training.box_count(),
        label_count: labels.box_count(),
        mean_score: labels.mean_score(),
        template_bins: model.map_or(0, |m| m.bins.len()),
        threshold: model.map(|m| m.threshold),
    }
}

pub fn run_round_zero(seq: &Sequence, config: &RoundConfig) -> RoundArtifacts {
    let mut params = config.params.clone();
    params.cluster.near_range_m = config.near_range(0);
    let labels = round_zero(seq, &params);
    let training_labels = LabelSet::new();
    let summary = summarize(0, config, &training_labels, None, &labels);
    RoundArtifacts { round: 0, training_labels, model: None, labels, summary }
}

/// One round `r ≥ 1`, depending only on the previous round's labels, the
/// sequence and the config.
pub fn run_round(
    seq: &Sequence,
    grids: &[BevGrid],
    previous: &RoundArtifacts,
    round: usize,
    config: &RoundConfig,
) -> Result<RoundArtifacts, DetectorError> {
    assert!(round >= 1, "round 0 has no model");
    let range = config.near_range(round);
    let training_labels = previous.labels.within_range(range);
    let mut model = train_on_grids(seq, grids, &training_labels, &config.params, range)?;
    // Labels from round 1 on were selected by the previous detector, so a
    // percentile over their self-responses only ratchets upward. The threshold
    // calibrated on the zero-shot labels is carried forward instead.
    if let Some(prev) = &previous.model {
        model.threshold = prev.threshold;
    }
    let raw = detect_on_grids(seq, grids, &model)?;
    let labels = track_and_filter(&raw, &seq.frame_poses(), &config.params.track);
    let summary = summarize(round, config, &training_labels, Some(&model), &labels);
    Ok(RoundArtifacts { round, training_labels, model: Some(model), labels, summary })
}

/// Runs `config.n_rounds` rounds. If a round has nothing to train on, the
/// error carries the rounds completed so far.
pub fn self_train(seq: &Sequence, config: &RoundConfig) -> Result<Vec<RoundArtifacts>, SelfTrainError> {
    config.validate()?;
    let mut rounds = vec![run_round_zero(seq, config)];
    if config.n_rounds == 1 {
        return Ok(rounds);
    }
    let grids = sequence_grids(seq, &config.params);
    for r in 1..config.n_rounds {
        match run_round(seq, &grids, &rounds[r - 1], r, config) {
            Ok(a) => rounds.push(a),
            Err(DetectorError::NoLabels) => {
                return Err(SelfTrainError::NoLabels {
                    round: r,
                    near_range_m: config.near_range(r),
                    last_completed: Some(r - 1),
                    completed: rounds,
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(rounds)
}

/// Writes `round_<r>/labels.jsonl`, `round_<r>/summary.json` and, for r ≥ 1,
/// `round_<r>/model.json`.
pub fn write_rounds(dir: &Path, rounds: &[RoundArtifacts]) -> Result<(), DataError> {
    for a in rounds {
        let rdir = dir.join(format!("round_{}", a.round));
        std::fs::create_dir_all(&rdir).map_err(|e| dataio::io_err(&rdir, e))?;
        dataio::write_labels(&rdir.join("labels.jsonl"), &a.labels)?;
        if let Some(m) = &a.model {
            dataio::write_json(&rdir.join("model.json"), m)?;
        }
        dataio::write_json(&rdir.join("summary.json"), &a.summary)?;
    }
    Ok(())
}
