//! Online removal of dynamic objects from LiDAR point cloud maps.
//!
//! The pipeline has two stages. The front end assembles consecutive scans
//! into submaps, flags points whose range disagrees with the current scans
//! (visibility-based removal) and reverts flags that lie on locally planar
//! map geometry (map-based reverting). The back end re-checks each submap
//! against neighbouring submaps with a discretized visibility test and
//! keeps voxels whose occupancy evidence is strong enough.

pub mod backend;
pub mod config;
pub mod evaluation;
pub mod frontend;
pub mod geometry;
pub mod merging;
pub mod normals;
pub(crate) mod par;
pub mod pipeline;
pub mod range_image;
pub mod spatial;
pub mod voxel;

mod error;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;

pub use geometry::{transform_cloud, Frame, Point3, PointState, PoseSE3, Submap, Vector3};
pub use voxel::{voxel_index_of, VoxelIndex};
