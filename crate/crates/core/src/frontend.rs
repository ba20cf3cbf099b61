//! Scan-to-map front end: submap assembly, visibility-based removal of
//! dynamic points, and map-based reverting of false removals.

use crate::geometry::{Frame, Point3, PointState, Submap};
use crate::normals::{fit_plane, incident_angle};
use crate::par;
use crate::range_image::{build_range_image, project_point, ProjectionConfig};
use crate::spatial::SpatialGrid;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct FrontendConfig {
    pub projection: ProjectionConfig,
    /// Scans merged into one submap.
    pub window_n: usize,
    /// A map point must be at least this much closer than the scan return
    /// in the same pixel to count as dynamic (meters).
    pub range_diff_threshold: f64,
    pub revert_enabled: bool,
    pub revert_k: usize,
    pub revert_search_radius: f64,
    pub revert_dist_eps: f64,
    pub revert_angle_eps_deg: f64,
    pub revert_use_distance: bool,
    pub revert_use_angle: bool,
    /// Neighbourhood size for the flagged point's own normal.
    pub normal_k: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            projection: ProjectionConfig {
                width: 1024,
                height: 32,
                fov_up_deg: 15.0,
                fov_down_deg: -15.0,
            },
            window_n: 10,
            range_diff_threshold: 0.4,
            revert_enabled: true,
            revert_k: 20,
            revert_search_radius: 0.5,
            revert_dist_eps: 0.05,
            revert_angle_eps_deg: 10.0,
            revert_use_distance: true,
            revert_use_angle: true,
            normal_k: 10,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        if self.window_n == 0 {
            return Err(Error::InvalidConfig("window_n must be positive".into()));
        }
        if self.range_diff_threshold <= 0.0 {
            return Err(Error::InvalidConfig(
                "range_diff_threshold must be positive".into(),
            ));
        }
        if self.revert_search_radius <= 0.0 || self.revert_dist_eps < 0.0 {
            return Err(Error::InvalidConfig(
                "revert distances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Merges a window of scans into a world-frame submap.
///
/// The submap pose is the middle frame's pose. Points keep frame order,
/// so index ranges per source scan stay contiguous.
pub fn assemble_submap(frames: &[Frame], id: u32) -> Result<Submap> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("cannot assemble an empty window".into()));
    }
    let clouds = par::map_slice(frames, |f| crate::transform_cloud(&f.points, &f.pose));
    let mut points = Vec::with_capacity(clouds.iter().map(Vec::len).sum());
    for c in clouds {
        points.extend(c);
    }
    let states = vec![PointState::RawStatic; points.len()];
    Ok(Submap {
        id,
        pose: frames[frames.len() / 2].pose,
        points,
        states,
    })
}

/// Flags map points that the window's scans see through.
///
/// Every submap point is projected into each scan's range image; if the
/// scan return in that pixel is farther by more than the threshold, the
/// map point blocked a ray that evidently travelled past it, so it is
/// marked [`PointState::Dynamic`]. Pixels without a return give no
/// evidence and are skipped.
pub fn visibility_removal(submap: &mut Submap, frames: &[Frame], cfg: &FrontendConfig) {
    for frame in frames {
        let scan_image = build_range_image(&frame.points, &cfg.projection);
        let world_to_sensor = frame.pose.inverse();
        let flags = par::map_slice(&submap.points, |p| {
            let local = world_to_sensor.transform_point(p);
            match project_point(&local, &cfg.projection) {
                Some((row, col, range)) => {
                    let seen = scan_image.range_at(row, col);
                    seen.is_finite() && range < seen - cfg.range_diff_threshold
                }
                None => false,
            }
        });
        for (state, flagged) in submap.states.iter_mut().zip(&flags) {
            if *flagged {
                *state = PointState::Dynamic;
            }
        }
    }
}

/// Restores flagged points that sit on locally planar static geometry.
///
/// A flagged point is reverted when a plane fitted to its nearby static
/// points passes the enabled tests: point-to-plane distance within
/// `revert_dist_eps`, and the point's own normal within
/// `revert_angle_eps_deg` of the plane normal. Points without enough
/// static neighbours stay dynamic. Returns the number of reverted points.
pub fn map_based_revert(submap: &mut Submap, cfg: &FrontendConfig) -> usize {
    let dynamic_idxs: Vec<u32> = submap
        .states
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == PointState::Dynamic)
        .map(|(i, _)| i as u32)
        .collect();
    if dynamic_idxs.is_empty() {
        return 0;
    }

    let static_points: Vec<Point3> = submap.static_points().copied().collect();
    if static_points.len() < 3 {
        return 0;
    }
    let static_grid = SpatialGrid::build_auto(&static_points);
    let full_grid = SpatialGrid::build_auto(&submap.points);
    let angle_eps = cfg.revert_angle_eps_deg.to_radians();

    let revert: Vec<bool> = par::map_slice(&dynamic_idxs, |&qi| {
        let q = submap.points[qi as usize];
        let mut idxs = Vec::with_capacity(cfg.revert_k);
        static_grid.k_nearest_within(&q, cfg.revert_k, cfg.revert_search_radius, &mut idxs);
        if idxs.len() < 3 {
            return false;
        }
        let neighbours: Vec<Point3> =
            idxs.iter().map(|&i| static_points[i as usize]).collect();
        let Some((centroid, plane_normal)) = fit_plane(&neighbours) else {
            return false;
        };
        if cfg.revert_use_distance {
            let dist = plane_normal.dot(&(q - centroid)).abs();
            if dist > cfg.revert_dist_eps {
                return false;
            }
        }
        if cfg.revert_use_angle {
            let mut own_idxs = Vec::with_capacity(cfg.normal_k);
            full_grid.k_nearest(&q, cfg.normal_k, &mut own_idxs);
            let own_neighbourhood: Vec<Point3> = own_idxs
                .iter()
                .map(|&i| submap.points[i as usize])
                .collect();
            let Some((_, own_normal)) = fit_plane(&own_neighbourhood) else {
                return false;
            };
            if incident_angle(&plane_normal, &own_normal) > angle_eps {
                return false;
            }
        }
        true
    });

    let mut count = 0;
    for (&qi, &flip) in dynamic_idxs.iter().zip(&revert) {
        if flip {
            submap.states[qi as usize] = PointState::Reverted;
            count += 1;
        }
    }
    count
}
