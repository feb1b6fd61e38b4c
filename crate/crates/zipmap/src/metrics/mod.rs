//! Evaluation metrics: trajectory errors, pairwise pose AUC, chamfer
//! accuracy/completeness/normal-consistency with ICP, and depth metrics
//! under scale-only or scale-and-shift alignment.

mod chamfer;
mod depth;
mod trajectory;

pub use chamfer::{chamfer_metrics, PointCloudReport};
pub use depth::{depth_metrics, DepthAlignment, DepthReport};
pub use trajectory::{ate_rpe, pose_auc, TrajectoryReport};
