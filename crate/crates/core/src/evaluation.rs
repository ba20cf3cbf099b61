//! Voxel-level scoring of a cleaned map against labelled ground truth.

use std::collections::HashSet;

use crate::geometry::Point3;
use crate::voxel::{voxel_index_of, VoxelIndex};
use crate::{Error, Result};

/// Ground-truth voxel sets. A voxel containing both static and dynamic
/// points appears in both sets.
#[derive(Debug, Clone, Default)]
pub struct GroundTruthVoxels {
    pub static_voxels: HashSet<VoxelIndex>,
    pub dynamic_voxels: HashSet<VoxelIndex>,
}

impl GroundTruthVoxels {
    /// Accumulates labelled world-frame points; call once per frame.
    pub fn add_points<'a, I>(&mut self, points: I, voxel_size: f64)
    where
        I: IntoIterator<Item = (&'a Point3, bool)>,
    {
        for (p, is_dynamic) in points {
            let v = voxel_index_of(p, voxel_size);
            if is_dynamic {
                self.dynamic_voxels.insert(v);
            } else {
                self.static_voxels.insert(v);
            }
        }
    }
}

pub fn voxelize_ground_truth(
    points: &[Point3],
    dynamic: &[bool],
    voxel_size: f64,
) -> GroundTruthVoxels {
    assert_eq!(points.len(), dynamic.len());
    let mut gt = GroundTruthVoxels::default();
    gt.add_points(points.iter().zip(dynamic.iter().copied()), voxel_size);
    gt
}

pub fn voxelize_cloud(points: &[Point3], voxel_size: f64) -> HashSet<VoxelIndex> {
    points.iter().map(|p| voxel_index_of(p, voxel_size)).collect()
}

/// Preservation rate, removal rate (both percent) and their harmonic mean
/// (on fractions, in `[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub preservation_rate: f64,
    pub removal_rate: f64,
    pub f1: f64,
    pub gt_static_voxels: usize,
    pub gt_dynamic_voxels: usize,
    pub map_voxels: usize,
}

impl EvalReport {
    pub fn format_block(&self) -> String {
        format!(
            "pr={:.6}\nrr={:.6}\nf1={:.6}\ngt_static_voxels={}\ngt_dynamic_voxels={}\nmap_voxels={}\n",
            self.preservation_rate,
            self.removal_rate,
            self.f1,
            self.gt_static_voxels,
            self.gt_dynamic_voxels,
            self.map_voxels
        )
    }

    pub fn csv_header() -> &'static str {
        "pr,rr,f1,gt_static_voxels,gt_dynamic_voxels,map_voxels"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{},{},{}",
            self.preservation_rate,
            self.removal_rate,
            self.f1,
            self.gt_static_voxels,
            self.gt_dynamic_voxels,
            self.map_voxels
        )
    }
}

/// Scores the cleaned map's voxel set.
///
/// Preservation rate: share of ground-truth static voxels still present.
/// Removal rate: share of ground-truth dynamic voxels no longer present.
/// Fails when either ground-truth set is empty, since the corresponding
/// rate would be undefined.
pub fn score(map_voxels: &HashSet<VoxelIndex>, gt: &GroundTruthVoxels) -> Result<EvalReport> {
    if gt.static_voxels.is_empty() || gt.dynamic_voxels.is_empty() {
        return Err(Error::InvalidInput(
            "ground truth must contain both static and dynamic voxels".into(),
        ));
    }
    let preserved = gt
        .static_voxels
        .iter()
        .filter(|v| map_voxels.contains(v))
        .count();
    let remaining = gt
        .dynamic_voxels
        .iter()
        .filter(|v| map_voxels.contains(v))
        .count();
    let pr = preserved as f64 / gt.static_voxels.len() as f64;
    let rr = 1.0 - remaining as f64 / gt.dynamic_voxels.len() as f64;
    let f1 = if pr + rr > 0.0 {
        2.0 * pr * rr / (pr + rr)
    } else {
        0.0
    };
    Ok(EvalReport {
        preservation_rate: 100.0 * pr,
        removal_rate: 100.0 * rr,
        f1,
        gt_static_voxels: gt.static_voxels.len(),
        gt_dynamic_voxels: gt.dynamic_voxels.len(),
        map_voxels: map_voxels.len(),
    })
}
