//! Exact ray-traced occupancy, used as an independent reference for the
//! image-space visibility check.
//!
//! Rays are walked voxel by voxel (Amanatides & Woo style), so "free" here
//! means the segment from sensor to return passes through the voxel, with
//! no projection or depth binning involved.

use std::collections::HashSet;

use mapclean_core::{voxel_index_of, Point3, VoxelIndex};

fn axis_of(v: &VoxelIndex, axis: usize) -> i64 {
    match axis {
        0 => v.x,
        1 => v.y,
        _ => v.z,
    }
}

fn bump(v: &mut VoxelIndex, axis: usize, step: i64) {
    match axis {
        0 => v.x += step,
        1 => v.y += step,
        _ => v.z += step,
    }
}

/// Voxels the segment passes through strictly before entering the voxel that
/// holds `end`. The endpoint's own voxel is never included; a segment that
/// starts and ends in one voxel yields nothing.
pub fn traverse_voxels(origin: &Point3, end: &Point3, voxel_size: f64) -> Vec<VoxelIndex> {
    assert!(voxel_size > 0.0);
    let start = voxel_index_of(origin, voxel_size);
    let target = voxel_index_of(end, voxel_size);
    let mut visited = Vec::new();
    if start == target {
        return visited;
    }

    let d = end - origin;
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let mut step = [0i64; 3];
    for axis in 0..3 {
        if d[axis] > 0.0 {
            step[axis] = 1;
            let boundary = (axis_of(&start, axis) + 1) as f64 * voxel_size;
            t_max[axis] = (boundary - origin[axis]) / d[axis];
            t_delta[axis] = voxel_size / d[axis];
        } else if d[axis] < 0.0 {
            step[axis] = -1;
            let boundary = axis_of(&start, axis) as f64 * voxel_size;
            t_max[axis] = (boundary - origin[axis]) / d[axis];
            t_delta[axis] = voxel_size / -d[axis];
        }
    }

    let manhattan = (target.x - start.x).unsigned_abs()
        + (target.y - start.y).unsigned_abs()
        + (target.z - start.z).unsigned_abs();
    let mut cur = start;
    for _ in 0..manhattan + 3 {
        visited.push(cur);
        let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[axis] > 1.0 + 1e-9 {
            // Next boundary lies past the endpoint; everything left is the
            // endpoint's voxel.
            break;
        }
        bump(&mut cur, axis, step[axis]);
        t_max[axis] += t_delta[axis];
        if cur == target {
            break;
        }
    }
    visited
}

#[derive(Debug, Default, Clone)]
pub struct RaycastSets {
    pub occupied: HashSet<VoxelIndex>,
    /// Traversed but holding no return of this cloud. Disjoint from
    /// `occupied`: a voxel with any return in it is not free.
    pub free: HashSet<VoxelIndex>,
}

pub fn raycast_submap_sets(origin: &Point3, points: &[Point3], voxel_size: f64) -> RaycastSets {
    let mut sets = RaycastSets::default();
    for p in points {
        sets.occupied.insert(voxel_index_of(p, voxel_size));
        sets.free.extend(traverse_voxels(origin, p, voxel_size));
    }
    sets.free.retain(|v| !sets.occupied.contains(v));
    sets
}

/// Reference verdicts for `query_voxels`: a voxel is kept when fewer than
/// `min_check` submaps observed it, or when at least `occ_threshold` of the
/// observing submaps saw it occupied. Each submap is `(origin, points)` in
/// world coordinates.
pub fn dda_occupancy_oracle(
    query_voxels: &[VoxelIndex],
    submaps: &[(Point3, Vec<Point3>)],
    voxel_size: f64,
    min_check: u32,
    occ_threshold: f64,
) -> Vec<(VoxelIndex, bool)> {
    let sets: Vec<RaycastSets> = submaps
        .iter()
        .map(|(origin, points)| raycast_submap_sets(origin, points, voxel_size))
        .collect();
    query_voxels
        .iter()
        .map(|v| {
            let mut n_occ = 0u32;
            let mut n_check = 0u32;
            for s in &sets {
                if s.occupied.contains(v) {
                    n_occ += 1;
                    n_check += 1;
                } else if s.free.contains(v) {
                    n_check += 1;
                }
            }
            let keep =
                n_check < min_check || f64::from(n_occ) >= occ_threshold * f64::from(n_check);
            (*v, keep)
        })
        .collect()
}
