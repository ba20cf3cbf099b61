//! Spherical projection of point clouds onto a range image.

use crate::geometry::Point3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub width: usize,
    pub height: usize,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
}

impl ProjectionConfig {
    pub fn new(width: usize, height: usize, fov_up_deg: f64, fov_down_deg: f64) -> Result<Self> {
        let cfg = Self {
            width,
            height,
            fov_up_deg,
            fov_down_deg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig(
                "range image dimensions must be positive".into(),
            ));
        }
        if !(self.fov_up_deg > self.fov_down_deg) {
            return Err(Error::InvalidConfig(format!(
                "fov_up ({}) must exceed fov_down ({})",
                self.fov_up_deg, self.fov_down_deg
            )));
        }
        Ok(())
    }
}

const MIN_PROJECTABLE_RANGE: f64 = 1e-9;

/// Projects a sensor-frame point onto the image. Returns `(row, col, range)`,
/// or `None` when the point sits at the origin or outside the vertical field
/// of view.
///
/// Row 0 corresponds to `fov_up`, the last row to `fov_down`. Column 0 starts
/// at azimuth -180 degrees and wraps around.
pub fn project_point(p: &Point3, cfg: &ProjectionConfig) -> Option<(usize, usize, f64)> {
    let range = p.coords.norm();
    if range < MIN_PROJECTABLE_RANGE {
        return None;
    }
    let fov_up = cfg.fov_up_deg.to_radians();
    let fov_down = cfg.fov_down_deg.to_radians();
    let elevation = (p.z / range).asin();
    let v = (fov_up - elevation) / (fov_up - fov_down);
    if !(0.0..=1.0).contains(&v) {
        return None;
    }
    let row = ((v * cfg.height as f64) as usize).min(cfg.height - 1);

    let azimuth = p.y.atan2(p.x);
    let u = (azimuth + std::f64::consts::PI) / std::f64::consts::TAU;
    let col = (u * cfg.width as f64) as usize % cfg.width;

    Some((row, col, range))
}

/// Per-pixel minimum range over a cloud, with the index of the point that
/// produced it.
#[derive(Debug, Clone)]
pub struct RangeImage {
    pub width: usize,
    pub height: usize,
    ranges: Vec<f64>,
    source: Vec<u32>,
}

const NO_SOURCE: u32 = u32::MAX;

impl RangeImage {
    pub fn empty(cfg: &ProjectionConfig) -> Self {
        Self {
            width: cfg.width,
            height: cfg.height,
            ranges: vec![f64::INFINITY; cfg.width * cfg.height],
            source: vec![NO_SOURCE; cfg.width * cfg.height],
        }
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    /// Minimum range seen at the pixel; `f64::INFINITY` where nothing projects.
    #[inline]
    pub fn range_at(&self, row: usize, col: usize) -> f64 {
        self.ranges[self.idx(row, col)]
    }

    /// Index (into the projected cloud) of the point holding the pixel.
    pub fn source_at(&self, row: usize, col: usize) -> Option<usize> {
        match self.source[self.idx(row, col)] {
            NO_SOURCE => None,
            i => Some(i as usize),
        }
    }

    pub fn has_return(&self, row: usize, col: usize) -> bool {
        self.ranges[self.idx(row, col)].is_finite()
    }

    pub fn num_returns(&self) -> usize {
        self.ranges.iter().filter(|r| r.is_finite()).count()
    }

    fn insert(&mut self, row: usize, col: usize, range: f64, point_idx: u32) {
        let i = self.idx(row, col);
        if range < self.ranges[i] {
            self.ranges[i] = range;
            self.source[i] = point_idx;
        }
    }

    fn merge_in(&mut self, other: &RangeImage) {
        for i in 0..self.ranges.len() {
            if other.ranges[i] < self.ranges[i] {
                self.ranges[i] = other.ranges[i];
                self.source[i] = other.source[i];
            }
        }
    }
}

fn fill_range_image(img: &mut RangeImage, points: &[Point3], base_index: usize, cfg: &ProjectionConfig) {
    for (i, p) in points.iter().enumerate() {
        if let Some((row, col, range)) = project_point(p, cfg) {
            img.insert(row, col, range, (base_index + i) as u32);
        }
    }
}

/// Builds the minimum-range image of a sensor-frame cloud.
///
/// Ties on range resolve to the lowest point index, so the result does not
/// depend on how the work is split across threads.
pub fn build_range_image(points: &[Point3], cfg: &ProjectionConfig) -> RangeImage {
    #[cfg(feature = "parallel")]
    {
        let threads = rayon::current_num_threads();
        if threads > 1 && points.len() >= 8192 {
            let chunk_len = points.len().div_ceil(threads);
            let partials = crate::par::map_indexed(
                &points.chunks(chunk_len).collect::<Vec<_>>(),
                |ci, chunk| {
                    let mut img = RangeImage::empty(cfg);
                    fill_range_image(&mut img, chunk, ci * chunk_len, cfg);
                    img
                },
            );
            let mut out = RangeImage::empty(cfg);
            for partial in &partials {
                out.merge_in(partial);
            }
            return out;
        }
    }
    let mut img = RangeImage::empty(cfg);
    fill_range_image(&mut img, points, 0, cfg);
    img
}
