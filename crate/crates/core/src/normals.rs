//! Surface normal estimation via PCA over local neighbourhoods.

use nalgebra::Matrix3;

use crate::geometry::{Point3, Vector3};
use crate::par;
use crate::spatial::{offer, SpatialGrid};
use crate::{Error, Result};

/// Per-point normals; `None` marks neighbourhoods too small or too
/// degenerate (collinear or coincident) to define a plane.
#[derive(Debug, Clone)]
pub struct NormalSet {
    pub normals: Vec<Option<Vector3>>,
}

impl NormalSet {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }
}

const DEGENERATE_EIGENVALUE: f64 = 1e-9;

/// Fits a plane to the points, returning centroid and unit normal.
///
/// `None` when fewer than three points are given or the covariance has no
/// clear smallest direction (the two smallest eigenvalues coincide within
/// [`DEGENERATE_EIGENVALUE`]), as for collinear or coincident inputs.
pub fn fit_plane(pts: &[Point3]) -> Option<(Point3, Vector3)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mut centroid = Vector3::zeros();
    for p in pts {
        centroid += p.coords;
    }
    centroid /= n;

    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p.coords - centroid;
        cov.m11 += d.x * d.x;
        cov.m12 += d.x * d.y;
        cov.m13 += d.x * d.z;
        cov.m22 += d.y * d.y;
        cov.m23 += d.y * d.z;
        cov.m33 += d.z * d.z;
    }
    cov /= n;
    cov.m21 = cov.m12;
    cov.m31 = cov.m13;
    cov.m32 = cov.m23;

    let (lambda_small, lambda_mid, normal) = smallest_eigenpair(&cov)?;
    if lambda_mid - lambda_small <= DEGENERATE_EIGENVALUE {
        return None;
    }
    Some((Point3::from(centroid), canonical_sign(normal)))
}

/// The two smallest eigenvalues of a symmetric 3x3 matrix and the unit
/// eigenvector of the smallest, via the closed-form trigonometric solution
/// of the characteristic cubic. `None` when the smallest eigenvalue is not
/// simple enough for its direction to mean anything.
///
/// The general iterative decomposition costs several times more than this
/// entire fit, which runs once per map point.
fn smallest_eigenpair(m: &Matrix3<f64>) -> Option<(f64, f64, Vector3)> {
    let scale = m.amax();
    if !(scale > 0.0 && scale.is_finite()) {
        return None;
    }
    let a = m / scale;

    let off2 = a.m12 * a.m12 + a.m13 * a.m13 + a.m23 * a.m23;
    let q = (a.m11 + a.m22 + a.m33) / 3.0;
    let dd = (a.m11 - q).powi(2) + (a.m22 - q).powi(2) + (a.m33 - q).powi(2);
    let p = ((dd + 2.0 * off2) / 6.0).sqrt();
    let (lambda_small, lambda_mid) = if p < 1e-14 {
        // Effectively q times the identity: no distinguished direction.
        (q, q)
    } else {
        // The largest root only needs the cosine, which stays
        // well-conditioned at the clamp boundaries; recovering the other
        // two by polynomial division keeps a coincident pair coincident to
        // machine precision instead of splitting it by the acos error.
        let b = (a - Matrix3::from_diagonal_element(q)) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let lambda_big = q + 2.0 * p * (r.acos() / 3.0).cos();
        let sum = 3.0 * q - lambda_big;
        let prod = match lambda_big.abs() > f64::MIN_POSITIVE {
            true => a.determinant() / lambda_big,
            false => 0.0,
        };
        let disc = (sum * sum - 4.0 * prod).max(0.0).sqrt();
        let lambda_mid = 0.5 * (sum + disc);
        let lambda_small = match lambda_mid.abs() > f64::MIN_POSITIVE {
            true => prod / lambda_mid,
            false => 0.0,
        };
        (lambda_small, lambda_mid)
    };

    // The smallest eigenvector is orthogonal to the row space of
    // (a - lambda_small I); the largest cross product of two rows gives the
    // most stable representative.
    let m0 = a - Matrix3::from_diagonal_element(lambda_small);
    let r0 = Vector3::new(m0.m11, m0.m12, m0.m13);
    let r1 = Vector3::new(m0.m21, m0.m22, m0.m23);
    let r2 = Vector3::new(m0.m31, m0.m32, m0.m33);
    let c01 = r0.cross(&r1);
    let c02 = r0.cross(&r2);
    let c12 = r1.cross(&r2);
    let (n01, n02, n12) = (c01.norm_squared(), c02.norm_squared(), c12.norm_squared());
    let (best, norm2) = if n01 >= n02 && n01 >= n12 {
        (c01, n01)
    } else if n02 >= n12 {
        (c02, n02)
    } else {
        (c12, n12)
    };
    if norm2 <= f64::MIN_POSITIVE {
        return None;
    }
    Some((
        lambda_small * scale,
        lambda_mid * scale,
        best / norm2.sqrt(),
    ))
}

fn canonical_sign(n: Vector3) -> Vector3 {
    let flip = n.z < 0.0
        || (n.z == 0.0 && n.y < 0.0)
        || (n.z == 0.0 && n.y == 0.0 && n.x < 0.0);
    if flip {
        -n
    } else {
        n
    }
}

/// Flips `n` so it faces the coordinate origin from `p`; the canonical sign
/// stands when `p` lies in the plane through the origin.
fn orient_toward_viewer(n: Vector3, p: &Point3) -> Vector3 {
    if n.dot(&p.coords) > 0.0 {
        -n
    } else {
        n
    }
}

struct KnnScratch {
    gather: Vec<u32>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    ids: Vec<u32>,
    d2s: Vec<f64>,
    best: Vec<(u64, u32)>,
    knn: Vec<u32>,
    nbhd: Vec<Point3>,
}

impl KnnScratch {
    fn new() -> Self {
        KnnScratch {
            gather: Vec::new(),
            xs: Vec::new(),
            ys: Vec::new(),
            zs: Vec::new(),
            ids: Vec::new(),
            d2s: Vec::new(),
            best: Vec::new(),
            knn: Vec::new(),
            nbhd: Vec::new(),
        }
    }

    fn append_candidates(&mut self, points: &[Point3]) {
        for &i in &self.gather {
            let p = points[i as usize];
            self.xs.push(p.x);
            self.ys.push(p.y);
            self.zs.push(p.z);
            self.ids.push(i);
        }
        self.gather.clear();
    }

    /// The `need` nearest candidates among those within `sqrt(cutoff)` of
    /// the query, or `None` when fewer than `need` are that close.
    ///
    /// Skipping candidates past the cutoff is safe for callers that treat a
    /// `None` as "escalate": any kept set of `need` has its worst distance
    /// within the cutoff, so dropped candidates could not have entered it.
    fn select(&mut self, q: &Point3, need: usize, cutoff: f64) -> Option<u64> {
        let n = self.ids.len();
        self.best.clear();
        self.d2s.resize(n, 0.0);
        for (((d2, &x), &y), &z) in self
            .d2s
            .iter_mut()
            .zip(&self.xs)
            .zip(&self.ys)
            .zip(&self.zs)
        {
            let dx = x - q.x;
            let dy = y - q.y;
            let dz = z - q.z;
            *d2 = dx * dx + dy * dy + dz * dz;
        }
        let mut worst = cutoff;
        for j in 0..n {
            let d2 = self.d2s[j];
            if d2 > worst {
                continue;
            }
            offer(&mut self.best, need, (d2.to_bits(), self.ids[j]));
            if self.best.len() == need {
                worst = f64::from_bits(self.best[need - 1].0);
            }
        }
        (self.best.len() >= need).then(|| self.best[need - 1].0)
    }
}

/// Estimates a normal for every point from its `k` nearest neighbours
/// (the point itself included), oriented to face the cloud's origin, where
/// the sensor is assumed to sit.
///
/// Queries batch per grid cell: candidates from the 3x3x3 block around a
/// cell settle the exact k nearest for most of its members (a block answer
/// whose worst distance stays within one cell width cannot be beaten from
/// outside the block), and the stragglers run the general shell search.
pub fn estimate_normals(points: &[Point3], k: usize) -> Result<NormalSet> {
    if k < 3 {
        return Err(Error::InvalidConfig(format!(
            "normal estimation needs k >= 3, got {k}"
        )));
    }
    if points.is_empty() {
        return Ok(NormalSet { normals: vec![] });
    }
    // A finer grid than the general-purpose default keeps the 27-cell
    // candidate block small. Misses escalate to a shell search on a coarser
    // grid, where sparse far-field neighbourhoods need far fewer shells.
    let grid = SpatialGrid::build_auto_pop(points, 5.0, 3.0, 7.0);
    let coarse = SpatialGrid::build(points, grid.cell_size() * 3.0);
    let cells: Vec<((i64, i64, i64), &[u32])> = grid.occupied_cells().collect();

    let cell = grid.cell_size();
    let near_bound = cell * cell;
    let need = k.min(points.len());

    let per_cell = par::map_slice_init(&cells, KnnScratch::new, |scr, (cell, members)| {
        scr.xs.clear();
        scr.ys.clear();
        scr.zs.clear();
        scr.ids.clear();
        grid.block_indices(*cell, &mut scr.gather);
        scr.append_candidates(points);
        let cutoff = match scr.ids.len() == points.len() {
            true => f64::INFINITY,
            false => near_bound,
        };

        members
            .iter()
            .map(|&i| {
                let q = points[i as usize];
                scr.nbhd.clear();
                if scr.select(&q, need, cutoff).is_some() {
                    scr.nbhd
                        .extend(scr.best.iter().map(|&(_, j)| points[j as usize]));
                } else {
                    coarse.k_nearest(&q, k, &mut scr.knn);
                    scr.nbhd
                        .extend(scr.knn.iter().map(|&j| points[j as usize]));
                }
                (i, fit_plane(&scr.nbhd).map(|(_, n)| orient_toward_viewer(n, &q)))
            })
            .collect::<Vec<_>>()
    });

    let mut normals = vec![None; points.len()];
    for group in per_cell {
        for (i, n) in group {
            normals[i as usize] = n;
        }
    }
    Ok(NormalSet { normals })
}

/// Angle between a surface normal and a viewing ray, in `[0, pi/2]`.
///
/// The normal's sign does not matter; a ray hitting the surface head-on
/// gives 0, a grazing ray gives pi/2.
pub fn incident_angle(normal: &Vector3, ray_dir: &Vector3) -> f64 {
    let denom = normal.norm() * ray_dir.norm();
    if denom < 1e-300 {
        return std::f64::consts::FRAC_PI_2;
    }
    let c = (normal.dot(ray_dir) / denom).abs().min(1.0);
    c.acos()
}
