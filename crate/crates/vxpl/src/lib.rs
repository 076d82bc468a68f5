//! Voxel distance-field mapping and conservative trajectory planning.
//!
//! The pipeline: depth scans fuse into a truncated signed distance layer,
//! which feeds an incrementally maintained Euclidean distance layer, which in
//! turn supports a sparse topological skeleton, global planners, trajectory
//! smoothing, and a conservative local replanner that only ever commits to
//! motion through observed free space.

pub mod cli;
pub mod esdf;
pub mod geom;
pub mod local;
pub mod plan;
pub mod sim;
pub mod skeleton;
pub mod smooth;
pub mod tsdf;
pub mod voxel;
