//! Label-free object discovery for LiDAR point-cloud sequences.
//!
//! The pipeline turns raw sweeps into 3D box labels without human annotation:
//!
//! 1. [`ground`] removes ground returns,
//! 2. [`cluster`] groups near-range points by density,
//! 3. [`boxfit`] fits minimum-area oriented boxes to clusters,
//! 4. [`track`] links boxes over time and drops detections that do not persist,
//! 5. [`detector`] learns a translation-equivariant template bank from the
//!    near-range labels and applies it at every range,
//! 6. [`selftrain`] iterates train → detect → filter rounds.
//!
//! [`eval`] scores detections with oriented IoU and a distance-to-collision
//! bucketed report; [`synth`] generates sequences with known ground truth.

pub mod boxfit;
pub mod cluster;
pub mod dataio;
pub mod detector;
pub mod eval;
pub mod geometry;
pub mod ground;
pub mod params;
pub mod selftrain;
pub mod synth;
pub mod track;

pub use dataio::{DataError, FramePose, LabelSet, Sequence, SequenceManifest};
pub use params::PipelineParams;
pub use geometry::{bev_iou, box_to_polygon, convex_intersection_area, OrientedBox, Point3, PointCloud, Polygon2, Pose};

