use crate::geometry::Point3;

/// Integer grid coordinates of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelIndex {
    pub x: i64,
    pub y: i64,
    pub z: i64,
}

impl VoxelIndex {
    pub fn new(x: i64, y: i64, z: i64) -> Self {
        Self { x, y, z }
    }

    /// Center of the voxel in world coordinates.
    pub fn center(&self, voxel_size: f64) -> Point3 {
        Point3::new(
            (self.x as f64 + 0.5) * voxel_size,
            (self.y as f64 + 0.5) * voxel_size,
            (self.z as f64 + 0.5) * voxel_size,
        )
    }
}

/// Maps a point to its voxel. Coordinates exactly on a boundary belong to
/// the voxel with the higher index.
pub fn voxel_index_of(p: &Point3, voxel_size: f64) -> VoxelIndex {
    debug_assert!(voxel_size > 0.0);
    VoxelIndex {
        x: (p.x / voxel_size).floor() as i64,
        y: (p.y / voxel_size).floor() as i64,
        z: (p.z / voxel_size).floor() as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_convention() {
        let s = 0.5;
        assert_eq!(
            voxel_index_of(&Point3::new(0.49, 0.0, 0.0), s),
            VoxelIndex::new(0, 0, 0)
        );
        assert_eq!(
            voxel_index_of(&Point3::new(1.0, 0.0, 0.0), s),
            VoxelIndex::new(2, 0, 0)
        );
        assert_eq!(
            voxel_index_of(&Point3::new(-0.01, -0.5, 0.0), s),
            VoxelIndex::new(-1, -1, 0)
        );
    }

    #[test]
    fn center_lands_inside_own_voxel() {
        let s = 0.2;
        let v = VoxelIndex::new(3, -4, 12);
        assert_eq!(voxel_index_of(&v.center(s), s), v);
    }
}
