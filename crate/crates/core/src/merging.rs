//! Combines per-submap back-end results into one global static map.
//!
//! Submaps overlap, so a voxel can carry conflicting verdicts: a submap
//! that saw a parked car keeps the voxel, a later one that saw it drive
//! away drops it. Each voxel is settled by the submap whose origin is
//! closest to it, among the submaps that actually hold a verdict for it;
//! ties go to the lower submap id.

use rustc_hash::FxHashMap;

use crate::backend::VoxelVerdicts;
use crate::geometry::{Point3, PoseSE3};
use crate::voxel::{voxel_index_of, VoxelIndex};

/// One submap's contribution to the global map.
#[derive(Debug, Clone)]
pub struct SubmapResult {
    pub id: u32,
    pub pose: PoseSE3,
    /// Static points that survived the back end, world frame.
    pub points: Vec<Point3>,
    pub verdicts: VoxelVerdicts,
}

#[derive(Debug, Clone)]
pub struct GlobalMap {
    pub voxel_size: f64,
    occupied: Vec<VoxelIndex>,
}

impl GlobalMap {
    pub fn is_occupied(&self, v: &VoxelIndex) -> bool {
        self.occupied.binary_search(v).is_ok()
    }

    pub fn occupied_voxels(&self) -> &[VoxelIndex] {
        &self.occupied
    }

    pub fn num_occupied(&self) -> usize {
        self.occupied.len()
    }
}

pub fn merge_submaps(results: &[SubmapResult], voxel_size: f64) -> GlobalMap {
    // (distance² bits, owner id) per voxel; smaller wins
    let mut claims: FxHashMap<VoxelIndex, ((u64, u32), bool)> = FxHashMap::default();
    for r in results {
        let origin = r.pose.translation();
        for (v, keep) in &r.verdicts.entries {
            let d2 = (v.center(voxel_size).coords - origin).norm_squared();
            let key = (d2.to_bits(), r.id);
            match claims.get_mut(v) {
                Some(existing) if key >= existing.0 => {}
                Some(existing) => *existing = (key, *keep),
                None => {
                    claims.insert(*v, (key, *keep));
                }
            }
        }
    }
    let mut occupied: Vec<VoxelIndex> = claims
        .into_iter()
        .filter(|(_, (_, keep))| *keep)
        .map(|(v, _)| v)
        .collect();
    occupied.sort_unstable();
    GlobalMap {
        voxel_size,
        occupied,
    }
}

/// All result points that fall into occupied voxels, in result order.
pub fn assemble_cloud(results: &[SubmapResult], map: &GlobalMap) -> Vec<Point3> {
    let mut cloud = Vec::new();
    for r in results {
        cloud.extend(
            r.points
                .iter()
                .filter(|p| map.is_occupied(&voxel_index_of(p, map.voxel_size)))
                .copied(),
        );
    }
    cloud
}
