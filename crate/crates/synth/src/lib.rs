//! Synthetic LiDAR scenes with exact ground truth.
//!
//! Scenes are built from a ground plane, axis-aligned boxes, and vertical
//! cylinders; cylinders can move along waypoint paths to act as dynamic
//! agents. Scans are produced by analytic ray casting, so every point
//! carries a correct static/dynamic label, and an independent voxel
//! ray-traversal oracle provides exact visibility for validating the
//! range-image approximation.

mod generate;
mod oracle;
mod scene;

pub use generate::{generate_frame, generate_sequence, GeneratedFrame};
pub use oracle::{dda_occupancy_oracle, raycast_submap_sets, traverse_voxels, RaycastSets};
pub use scene::{
    Aabb, AgentSpec, Cylinder, SceneSpec, SensorSpec, DEFAULT_MAX_RANGE, DEFAULT_SCAN_RATE_HZ,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid scene: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;
