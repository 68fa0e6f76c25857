//! The full set of pipeline tunables, as read from a params JSON file.

use serde::{Deserialize, Serialize};

use crate::boxfit::BoxFitParams;
use crate::cluster::ClusterParams;
use crate::detector::DetectorParams;
use crate::ground::GroundParams;
use crate::track::TrackParams;

/// Missing sections or fields take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub ground: GroundParams,
    pub cluster: ClusterParams,
    pub boxfit: BoxFitParams,
    pub track: TrackParams,
    pub detector: DetectorParams,
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), String> {
        if !self.cluster.is_valid() {
            return Err(format!("invalid cluster params: {:?}", self.cluster));
        }
        if !(self.ground.cell_size_m > 0.0) || !(0.0..=100.0).contains(&self.ground.percentile) {
            return Err(format!("invalid ground params: {:?}", self.ground));
        }
        if !(self.track.gate_m > 0.0) {
            return Err("track.gate_m must be positive".into());
        }
        self.detector.validate().map_err(|e| e.to_string())
    }
}
