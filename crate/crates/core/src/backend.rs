//! Map-to-map back end.
//!
//! Each finished submap is reduced to its static points, a voxel set, and a
//! visibility boundary image computed from its own origin. When a submap is
//! queried, nearby submaps vote on every voxel it occupies: a submap counts
//! as *occupying* when its own voxel set contains the voxel, and as
//! *checking* when it occupies it or its boundary image proves the voxel's
//! depth cell was seen through. Voxels with enough checks and a low
//! occupied-to-checked ratio are dropped from the static map.

use rustc_hash::FxHashSet;
use std::sync::Arc;

use crate::geometry::{Point3, PoseSE3};
use crate::normals::{estimate_normals, incident_angle, NormalSet};
use crate::par;
use crate::range_image::{project_point, ProjectionConfig};
use crate::voxel::{voxel_index_of, VoxelIndex};
use crate::{Error, Result};

/// Monotone partition of `[0, max_depth]` into range cells whose widths
/// grow geometrically, so nearby structure is resolved finely.
#[derive(Debug, Clone)]
pub struct DepthDiscretization {
    edges: Vec<f64>,
}

impl DepthDiscretization {
    pub fn with_growth(num_cells: usize, max_depth: f64, growth: f64) -> Result<Self> {
        if num_cells == 0 {
            return Err(Error::InvalidConfig("need at least one depth cell".into()));
        }
        if !(max_depth > 0.0) {
            return Err(Error::InvalidConfig("max depth must be positive".into()));
        }
        if !(growth > 1.0) {
            return Err(Error::InvalidConfig(
                "depth cell growth must exceed 1 so widths increase".into(),
            ));
        }
        let denom = growth.powi(num_cells as i32) - 1.0;
        let edges = (0..=num_cells)
            .map(|d| max_depth * (growth.powi(d as i32) - 1.0) / denom)
            .collect();
        Ok(Self { edges })
    }

    /// Chooses the growth factor so the first cell has the requested width.
    /// Requires `first_bin < max_depth / num_cells`, otherwise widths could
    /// not increase.
    pub fn with_first_bin(num_cells: usize, max_depth: f64, first_bin: f64) -> Result<Self> {
        if num_cells == 0 {
            return Err(Error::InvalidConfig("need at least one depth cell".into()));
        }
        if !(first_bin > 0.0) || first_bin >= max_depth / num_cells as f64 {
            return Err(Error::InvalidConfig(format!(
                "first depth cell width must lie in (0, {}) for {} cells over {} m",
                max_depth / num_cells as f64,
                num_cells,
                max_depth
            )));
        }
        let width0 = |g: f64| max_depth * (g - 1.0) / (g.powi(num_cells as i32) - 1.0);
        let mut lo = 1.0 + 1e-12;
        let mut hi = 2.0;
        while width0(hi) > first_bin {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if width0(mid) > first_bin {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::with_growth(num_cells, max_depth, 0.5 * (lo + hi))
    }

    pub fn num_cells(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn max_depth(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// 1-based cell of a range. Values on an edge fall into the farther
    /// cell; ranges at or beyond `max_depth` clamp to the last cell.
    pub fn cell_of(&self, range: f64) -> u32 {
        let d = self.edges.partition_point(|e| *e <= range);
        d.clamp(1, self.num_cells()) as u32
    }
}

/// Deepest trusted cell per pixel; 0 where the pixel carries no evidence.
#[derive(Debug, Clone)]
pub struct VisibilityBoundarySet {
    pub width: usize,
    pub height: usize,
    cells: Vec<u32>,
}

impl VisibilityBoundarySet {
    pub fn cell_at(&self, row: usize, col: usize) -> u32 {
        self.cells[row * self.width + col]
    }
}

/// Computes a submap's visibility boundary image from its origin.
///
/// Per pixel, free space is trusted out to the farthest return, but no
/// farther than the nearest *pseudo-occupied* return: a point seen at an
/// incident angle above `lambda_thres_deg` (a grazing surface) does not
/// block the pixel physically, yet nothing behind it was observable. With
/// `incident_correction` off, the grazing clamp is skipped.
pub fn visibility_check(
    points: &[Point3],
    normals: &NormalSet,
    pose: &PoseSE3,
    projection: &ProjectionConfig,
    depth: &DepthDiscretization,
    lambda_thres_deg: f64,
    incident_correction: bool,
) -> VisibilityBoundarySet {
    assert_eq!(points.len(), normals.len());
    let n_pixels = projection.width * projection.height;
    let mut max_all = vec![0.0f64; n_pixels];
    let mut min_pseudo = vec![f64::INFINITY; n_pixels];
    let world_to_sensor = pose.inverse();
    let origin = Point3::from(*pose.translation());
    let lambda_thres = lambda_thres_deg.to_radians();

    let projected = par::map_indexed(points, |i, p| {
        let local = world_to_sensor.transform_point(p);
        project_point(&local, projection).map(|(row, col, range)| {
            let pseudo = match &normals.normals[i] {
                Some(n) => incident_angle(n, &(p - origin)) > lambda_thres,
                None => false,
            };
            (row * projection.width + col, range, pseudo)
        })
    });
    for (idx, range, pseudo) in projected.into_iter().flatten() {
        if range > max_all[idx] {
            max_all[idx] = range;
        }
        if pseudo && range < min_pseudo[idx] {
            min_pseudo[idx] = range;
        }
    }

    let cells = par::map_range(n_pixels, |i| {
        if max_all[i] == 0.0 {
            0
        } else if incident_correction && min_pseudo[i].is_finite() {
            depth.cell_of(min_pseudo[i])
        } else {
            depth.cell_of(max_all[i])
        }
    });
    VisibilityBoundarySet {
        width: projection.width,
        height: projection.height,
        cells,
    }
}

#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub projection: ProjectionConfig,
    /// Submaps whose origin lies within this distance vote on a query.
    pub query_radius: f64,
    pub lambda_thres_deg: f64,
    pub depth_num_cells: usize,
    pub depth_max: f64,
    pub depth_first_bin: f64,
    /// Keep a voxel when occupied/checked reaches this ratio.
    pub occ_prob_threshold: f64,
    /// Below this many checks a voxel is left untouched.
    pub min_check: u32,
    pub voxel_size: f64,
    pub normal_k: usize,
    pub incident_correction: bool,
    pub visibility_check_enabled: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            projection: ProjectionConfig {
                width: 1024,
                height: 32,
                fov_up_deg: 15.0,
                fov_down_deg: -15.0,
            },
            query_radius: 20.0,
            lambda_thres_deg: 75.0,
            depth_num_cells: 64,
            depth_max: 50.0,
            depth_first_bin: 0.5,
            occ_prob_threshold: 0.5,
            min_check: 2,
            voxel_size: 0.2,
            normal_k: 10,
            incident_correction: true,
            visibility_check_enabled: true,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        self.discretization()?;
        if self.voxel_size <= 0.0 {
            return Err(Error::InvalidConfig("voxel_size must be positive".into()));
        }
        if self.query_radius <= 0.0 {
            return Err(Error::InvalidConfig("query_radius must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.occ_prob_threshold) {
            return Err(Error::InvalidConfig(
                "occ_prob_threshold must lie in [0, 1]".into(),
            ));
        }
        if self.normal_k < 3 {
            return Err(Error::InvalidConfig("normal_k must be at least 3".into()));
        }
        Ok(())
    }

    pub fn discretization(&self) -> Result<DepthDiscretization> {
        DepthDiscretization::with_first_bin(self.depth_num_cells, self.depth_max, self.depth_first_bin)
    }
}

/// A submap reduced to the artifacts the back end needs. Built once,
/// queried many times.
#[derive(Debug)]
pub struct StaticSubmap {
    pub id: u32,
    pub pose: PoseSE3,
    /// Static points in the world frame.
    pub points: Vec<Point3>,
    voxel_set: FxHashSet<VoxelIndex>,
    voxels_sorted: Vec<VoxelIndex>,
    boundary: VisibilityBoundarySet,
    voxel_size: f64,
    inv_pose: PoseSE3,
}

impl StaticSubmap {
    pub fn build(
        id: u32,
        pose: PoseSE3,
        points: Vec<Point3>,
        cfg: &BackendConfig,
        depth: &DepthDiscretization,
    ) -> Result<Self> {
        let normals = estimate_normals(&points, cfg.normal_k)?;
        let boundary = visibility_check(
            &points,
            &normals,
            &pose,
            &cfg.projection,
            depth,
            cfg.lambda_thres_deg,
            cfg.incident_correction,
        );
        let voxel_set: FxHashSet<VoxelIndex> =
            points.iter().map(|p| voxel_index_of(p, cfg.voxel_size)).collect();
        let mut voxels_sorted: Vec<VoxelIndex> = voxel_set.iter().copied().collect();
        voxels_sorted.sort_unstable();
        Ok(Self {
            inv_pose: pose.inverse(),
            id,
            pose,
            points,
            voxel_set,
            voxels_sorted,
            boundary,
            voxel_size: cfg.voxel_size,
        })
    }

    pub fn occupies(&self, v: &VoxelIndex) -> bool {
        self.voxel_set.contains(v)
    }

    pub fn voxels(&self) -> &[VoxelIndex] {
        &self.voxels_sorted
    }

    pub fn boundary(&self) -> &VisibilityBoundarySet {
        &self.boundary
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    /// Whether this submap saw through the given world point: it projects
    /// into the field of view, lies within the depth range, and its cell is
    /// inside the pixel's trusted boundary.
    pub fn sees(&self, world: &Point3, projection: &ProjectionConfig, depth: &DepthDiscretization) -> bool {
        let local = self.inv_pose.transform_point(world);
        match project_point(&local, projection) {
            Some((row, col, range)) if range < depth.max_depth() => {
                depth.cell_of(range) <= self.boundary.cell_at(row, col)
            }
            _ => false,
        }
    }
}

/// Submaps whose origin lies within `radius` of the query pose, closest
/// first; ties break toward the lower id. The query submap itself is
/// returned at distance zero when present.
pub fn query_nearby_submaps(
    submaps: &[Arc<StaticSubmap>],
    query_pose: &PoseSE3,
    radius: f64,
) -> Vec<Arc<StaticSubmap>> {
    let q = query_pose.translation();
    let mut hits: Vec<(u64, u32, usize)> = submaps
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let d2 = (s.pose.translation() - q).norm_squared();
            (d2 <= radius * radius).then(|| (d2.to_bits(), s.id, i))
        })
        .collect();
    hits.sort_unstable();
    hits.into_iter().map(|(_, _, i)| submaps[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OccupancyCell {
    pub n_occ: u32,
    pub n_check: u32,
}

impl OccupancyCell {
    pub fn probability(&self) -> f64 {
        self.n_occ as f64 / self.n_check as f64
    }
}

/// Occupancy evidence for every voxel of one query submap, sorted by
/// voxel index.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub voxel_size: f64,
    pub entries: Vec<(VoxelIndex, OccupancyCell)>,
}

impl OccupancyGrid {
    pub fn get(&self, v: &VoxelIndex) -> Option<OccupancyCell> {
        self.entries
            .binary_search_by(|(idx, _)| idx.cmp(v))
            .ok()
            .map(|i| self.entries[i].1)
    }
}

/// Tallies, for each voxel of the query submap, how many nearby submaps
/// occupy it and how many checked it.
///
/// Occupancy always implies a check, so `n_occ <= n_check` and voxels a
/// submap could not see (out of view, beyond the depth range, occluded)
/// still count when that submap occupies them. With the visibility check
/// disabled, every nearby submap checks every voxel.
pub fn accumulate_occupancy(
    query: &StaticSubmap,
    nearby: &[Arc<StaticSubmap>],
    cfg: &BackendConfig,
    depth: &DepthDiscretization,
) -> OccupancyGrid {
    let entries = par::map_slice(query.voxels(), |v| {
        let center = v.center(cfg.voxel_size);
        let mut n_occ = 0;
        let mut n_check = 0;
        for s in nearby {
            let occ = s.occupies(v);
            let checked = if occ {
                true
            } else if cfg.visibility_check_enabled {
                s.sees(&center, &cfg.projection, depth)
            } else {
                true
            };
            n_occ += occ as u32;
            n_check += checked as u32;
        }
        (*v, OccupancyCell { n_occ, n_check })
    });
    OccupancyGrid {
        voxel_size: cfg.voxel_size,
        entries,
    }
}

/// Per-voxel keep/drop decision, sorted by voxel index. Voxels absent from
/// the grid are treated as kept.
#[derive(Debug, Clone)]
pub struct VoxelVerdicts {
    pub voxel_size: f64,
    pub entries: Vec<(VoxelIndex, bool)>,
}

impl VoxelVerdicts {
    pub fn is_static(&self, v: &VoxelIndex) -> bool {
        self.entries
            .binary_search_by(|(idx, _)| idx.cmp(v))
            .map(|i| self.entries[i].1)
            .unwrap_or(true)
    }
}

/// A voxel stays static when the evidence is too thin (`n_check` below
/// `min_check`) or the occupied ratio reaches the threshold.
pub fn classify_static(grid: &OccupancyGrid, cfg: &BackendConfig) -> VoxelVerdicts {
    let entries = grid
        .entries
        .iter()
        .map(|(v, c)| {
            let keep = c.n_check < cfg.min_check || c.probability() >= cfg.occ_prob_threshold;
            (*v, keep)
        })
        .collect();
    VoxelVerdicts {
        voxel_size: grid.voxel_size,
        entries,
    }
}

/// Filters a submap's static points down to those in voxels that survived
/// classification, preserving point order.
pub fn extract_static_map(points: &[Point3], verdicts: &VoxelVerdicts) -> Vec<Point3> {
    points
        .iter()
        .filter(|p| verdicts.is_static(&voxel_index_of(p, verdicts.voxel_size)))
        .copied()
        .collect()
}
