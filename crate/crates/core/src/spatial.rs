//! Uniform hash-grid index for nearest-neighbour queries.

use rustc_hash::FxHashMap;

use crate::geometry::Point3;

/// Point index over a voxel hash map. Queries expand cell shells outward
/// until the running k-th distance proves no closer point can remain, so
/// results are exact.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    cell_size: f64,
    points: Vec<Point3>,
    cells: FxHashMap<(i64, i64, i64), Vec<u32>>,
    min_cell: (i64, i64, i64),
    max_cell: (i64, i64, i64),
}

impl SpatialGrid {
    pub fn build(points: &[Point3], cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let mut cells: FxHashMap<(i64, i64, i64), Vec<u32>> = FxHashMap::default();
        let mut min_cell = (i64::MAX, i64::MAX, i64::MAX);
        let mut max_cell = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p, cell_size);
            min_cell = (min_cell.0.min(c.0), min_cell.1.min(c.1), min_cell.2.min(c.2));
            max_cell = (max_cell.0.max(c.0), max_cell.1.max(c.1), max_cell.2.max(c.2));
            cells.entry(c).or_default().push(i as u32);
        }
        Self {
            cell_size,
            points: points.to_vec(),
            cells,
            min_cell,
            max_cell,
        }
    }

    /// Builds with a cell size derived from the cloud's extent, aiming for
    /// roughly a dozen points per occupied cell.
    pub fn build_auto(points: &[Point3]) -> Self {
        Self::build_auto_pop(points, 12.0, 2.0, 48.0)
    }

    /// Like [`build_auto`](Self::build_auto) but steering the mean occupied
    /// cell population toward `target` when it falls outside `lo..=hi`.
    ///
    /// Rebuilds at corrected sizes until the population lands in the band,
    /// learning how cell counts actually respond to resizing; clouds
    /// concentrated on surfaces scale closer to quadratically than
    /// cubically.
    pub fn build_auto_pop(points: &[Point3], target: f64, lo: f64, hi: f64) -> Self {
        let mut cell = spacing_guess(points);
        let mut grid = Self::build(points, cell);
        if points.len() < 64 {
            return grid;
        }
        let mut d_eff = significant_dims(points).max(1) as f64;
        for _ in 0..3 {
            let mean_pop = points.len() as f64 / grid.cells.len().max(1) as f64;
            if (lo..=hi).contains(&mean_pop) {
                break;
            }
            let factor = (target / mean_pop).powf(1.0 / d_eff).clamp(0.2, 5.0);
            let next = (cell * factor).clamp(1e-3, 1e3);
            if (next - cell).abs() < 1e-9 {
                break;
            }
            let rebuilt = Self::build(points, next);
            let count_ratio = rebuilt.cells.len() as f64 / grid.cells.len().max(1) as f64;
            if count_ratio > 0.0 {
                d_eff = (count_ratio.ln() / (cell / next).ln()).clamp(1.0, 3.0);
            }
            cell = next;
            grid = rebuilt;
        }
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: u32) -> &Point3 {
        &self.points[i as usize]
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Indices of the k nearest points, closest first. Ties on distance
    /// resolve to the lower index.
    pub fn k_nearest(&self, query: &Point3, k: usize, out: &mut Vec<u32>) {
        self.search(query, k, f64::INFINITY, out);
    }

    /// Like [`k_nearest`](Self::k_nearest) but ignores points farther than
    /// `radius`.
    pub fn k_nearest_within(&self, query: &Point3, k: usize, radius: f64, out: &mut Vec<u32>) {
        self.search(query, k, radius, out);
    }

    fn search(&self, query: &Point3, k: usize, radius: f64, out: &mut Vec<u32>) {
        out.clear();
        if k == 0 || self.points.is_empty() {
            return;
        }
        let radius2_bits = (radius * radius).to_bits();
        // (distance² bits, index), sorted ascending, at most k entries.
        let mut best: Vec<(u64, u32)> = Vec::with_capacity(k + 1);

        let c0 = cell_of(query, self.cell_size);
        let span = (0..3).fold(0i64, |acc, a| {
            let (lo, hi, c) = match a {
                0 => (self.min_cell.0, self.max_cell.0, c0.0),
                1 => (self.min_cell.1, self.max_cell.1, c0.1),
                _ => (self.min_cell.2, self.max_cell.2, c0.2),
            };
            acc.max((c - lo).abs()).max((hi - c).abs())
        });

        for s in 0..=span {
            let ring_gap = (s as f64 - 1.0).max(0.0) * self.cell_size;
            if ring_gap > radius {
                break;
            }
            if best.len() == k && best[k - 1].0 <= (ring_gap * ring_gap).to_bits() {
                break;
            }
            self.visit_shell(c0, s, |idx, p| {
                let d2 = (p - query).norm_squared();
                let key = (d2.to_bits(), idx);
                if key.0 <= radius2_bits {
                    offer(&mut best, k, key);
                }
            });
        }

        out.extend(best.into_iter().map(|(_, i)| i));
    }

    /// Occupied cells and the indices filed under each, in no particular
    /// order.
    pub fn occupied_cells(&self) -> impl Iterator<Item = ((i64, i64, i64), &[u32])> {
        self.cells.iter().map(|(c, idxs)| (*c, idxs.as_slice()))
    }

    /// Appends the indices of all points in the 3x3x3 block around `cell`.
    /// Any point outside the block is at least one cell size away from every
    /// position inside `cell`, which makes the block a sufficient candidate
    /// set whenever the running k-th distance stays within that bound.
    pub fn block_indices(&self, cell: (i64, i64, i64), out: &mut Vec<u32>) {
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(idxs) = self.cells.get(&(cell.0 + dx, cell.1 + dy, cell.2 + dz)) {
                        out.extend_from_slice(idxs);
                    }
                }
            }
        }
    }

    fn visit_shell(&self, c0: (i64, i64, i64), s: i64, mut f: impl FnMut(u32, &Point3)) {
        // Clamp to the occupied bounding box so growing shells around sparse
        // regions stop probing empty space.
        let x0 = (-s).max(self.min_cell.0 - c0.0);
        let x1 = s.min(self.max_cell.0 - c0.0);
        let y0 = (-s).max(self.min_cell.1 - c0.1);
        let y1 = s.min(self.max_cell.1 - c0.1);
        let z0 = (-s).max(self.min_cell.2 - c0.2);
        let z1 = s.min(self.max_cell.2 - c0.2);
        for dx in x0..=x1 {
            for dy in y0..=y1 {
                for dz in z0..=z1 {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != s {
                        continue;
                    }
                    let key = (c0.0 + dx, c0.1 + dy, c0.2 + dz);
                    if let Some(idxs) = self.cells.get(&key) {
                        for &i in idxs {
                            f(i, &self.points[i as usize]);
                        }
                    }
                }
            }
        }
    }
}

/// Insert into a sorted best-k buffer, dropping the worst entry on overflow.
pub(crate) fn offer(best: &mut Vec<(u64, u32)>, k: usize, key: (u64, u32)) {
    if best.len() == k {
        if key >= best[k - 1] {
            return;
        }
        best.pop();
    }
    let pos = best.partition_point(|e| *e < key);
    best.insert(pos, key);
}

pub(crate) fn cell_of(p: &Point3, cell_size: f64) -> (i64, i64, i64) {
    (
        (p.x / cell_size).floor() as i64,
        (p.y / cell_size).floor() as i64,
        (p.z / cell_size).floor() as i64,
    )
}

fn extents(points: &[Point3]) -> [f64; 3] {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
}

fn significant_dims(points: &[Point3]) -> usize {
    extents(points).iter().filter(|e| **e > 1e-6).count()
}

fn spacing_guess(points: &[Point3]) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let ext = extents(points);
    let significant: Vec<f64> = ext.into_iter().filter(|e| *e > 1e-6).collect();
    if significant.is_empty() {
        return 1.0;
    }
    let volume: f64 = significant.iter().product();
    let spacing = (volume / points.len() as f64).powf(1.0 / significant.len() as f64);
    (3.0 * spacing).clamp(1e-3, 10.0)
}
