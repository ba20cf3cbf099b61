use mapclean_core::{voxel_index_of, Point3, VoxelIndex};
use mapclean_synth::{raycast_submap_sets, traverse_voxels};
use proptest::prelude::*;

const VOXEL: f64 = 0.2;

/// Coordinates sit well inside their voxel so the expected results are not
/// at the mercy of floating-point rounding on cell boundaries.
fn coord() -> impl Strategy<Value = f64> {
    (-30i64..30, 0.08f64..0.92).prop_map(|(g, f)| (g as f64 + f) * VOXEL)
}

fn point() -> impl Strategy<Value = Point3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn manhattan(a: &VoxelIndex, b: &VoxelIndex) -> i64 {
    (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs()
}

fn near_cell_boundary(q: &Point3, s: f64) -> bool {
    [q.x, q.y, q.z].iter().any(|c| {
        let f = (c / s).rem_euclid(1.0);
        f < 1e-6 || f > 1.0 - 1e-6
    })
}

proptest! {
    #[test]
    fn traversal_is_a_connected_path_toward_the_endpoint(
        origin in point(),
        end in point(),
    ) {
        let visited = traverse_voxels(&origin, &end, VOXEL);
        let start = voxel_index_of(&origin, VOXEL);
        let target = voxel_index_of(&end, VOXEL);
        if start == target {
            prop_assert!(visited.is_empty());
            return Ok(());
        }
        prop_assert_eq!(visited[0], start);
        prop_assert!(!visited.contains(&target));
        prop_assert!(visited.len() as i64 <= manhattan(&start, &target));
        for w in visited.windows(2) {
            prop_assert_eq!(manhattan(&w[0], &w[1]), 1);
        }
        for v in &visited {
            prop_assert!(v.x >= start.x.min(target.x) && v.x <= start.x.max(target.x));
            prop_assert!(v.y >= start.y.min(target.y) && v.y <= start.y.max(target.y));
            prop_assert!(v.z >= start.z.min(target.z) && v.z <= start.z.max(target.z));
        }
    }

    #[test]
    fn interior_samples_land_in_traversed_voxels(
        origin in point(),
        end in point(),
    ) {
        let visited = traverse_voxels(&origin, &end, VOXEL);
        let target = voxel_index_of(&end, VOXEL);
        let d = end - origin;
        for k in 1..=40u32 {
            let t = f64::from(k) / 41.0;
            let q = origin + d * t;
            if near_cell_boundary(&q, VOXEL) {
                continue;
            }
            let vq = voxel_index_of(&q, VOXEL);
            prop_assert!(
                vq == target || visited.contains(&vq),
                "sample at t={t} fell in unvisited voxel {vq:?}"
            );
        }
    }

    #[test]
    fn free_never_overlaps_occupied(
        origin in point(),
        points in prop::collection::vec(point(), 1..25),
    ) {
        let sets = raycast_submap_sets(&origin, &points, VOXEL);
        for p in &points {
            prop_assert!(sets.occupied.contains(&voxel_index_of(p, VOXEL)));
        }
        for v in &sets.free {
            prop_assert!(!sets.occupied.contains(v));
        }
    }
}
