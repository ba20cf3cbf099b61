//! Randomized invariant checks across the library.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, Unit};
use proptest::prelude::*;

use mapclean_core::backend::{
    accumulate_occupancy, classify_static, BackendConfig, DepthDiscretization, StaticSubmap,
};
use mapclean_core::config::PipelineConfig;
use mapclean_core::evaluation::{score, voxelize_cloud, voxelize_ground_truth};
use mapclean_core::frontend::{
    assemble_submap, map_based_revert, visibility_removal, FrontendConfig,
};
use mapclean_core::merging::{merge_submaps, SubmapResult};
use mapclean_core::normals::estimate_normals;
use mapclean_core::range_image::{build_range_image, ProjectionConfig};
use mapclean_core::{
    transform_cloud, voxel_index_of, Frame, Point3, PointState, PoseSE3, Vector3, VoxelIndex,
};

fn point() -> impl Strategy<Value = Point3> {
    (-40.0..40.0f64, -40.0..40.0f64, -40.0..40.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(point(), 1..max)
}

fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
    ((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), -3.1..3.1f64)
        .prop_filter("axis too short", |((x, y, z), _)| {
            (x * x + y * y + z * z).sqrt() > 0.2
        })
        .prop_map(|((x, y, z), angle)| {
            let axis = Unit::new_normalize(Vector3::new(x, y, z));
            Rotation3::from_axis_angle(&axis, angle).into_inner()
        })
}

fn pose() -> impl Strategy<Value = PoseSE3> {
    (rotation(), (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64))
        .prop_map(|(r, (x, y, z))| PoseSE3::new(r, Vector3::new(x, y, z)).unwrap())
}

/// Sensor-frame returns inside a ±14° FOV so every point projects.
fn scan_points(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(
        (0.0..std::f64::consts::TAU, -0.24..0.24f64, 2.0..20.0f64),
        10..max,
    )
    .prop_map(|dirs| {
        dirs.into_iter()
            .map(|(az, el, r)| {
                Point3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin())
            })
            .collect()
    })
}

fn max_abs(m: &Matrix3<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

proptest! {
    #[test]
    fn transform_roundtrip_recovers_cloud(cloud in cloud(200), pose in pose()) {
        let back = transform_cloud(&transform_cloud(&cloud, &pose), &pose.inverse());
        for (a, b) in cloud.iter().zip(&back) {
            prop_assert!((a - b).abs().max() <= 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn pose_composition_associative(a in pose(), b in pose(), c in pose()) {
        let left = (a * b) * c;
        let right = a * (b * c);
        prop_assert!(max_abs(&(left.rotation() - right.rotation())) <= 1e-9);
        prop_assert!((left.translation() - right.translation()).abs().max() <= 1e-9);
    }

    #[test]
    fn pose_composition_stays_on_se3(a in pose(), b in pose()) {
        let ab = a * b;
        let r = ab.rotation();
        prop_assert!(max_abs(&(r.transpose() * r - Matrix3::identity())) <= 1e-9);
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-9);
        let id = ab * ab.inverse();
        prop_assert!(max_abs(&(id.rotation() - Matrix3::identity())) <= 1e-9);
        prop_assert!(id.translation().abs().max() <= 1e-9);
    }

    #[test]
    fn voxel_index_is_floor_per_axis(p in point(), size in 0.05..2.0f64) {
        let v = voxel_index_of(&p, size);
        prop_assert_eq!(v.x, (p.x / size).floor() as i64);
        prop_assert_eq!(v.y, (p.y / size).floor() as i64);
        prop_assert_eq!(v.z, (p.z / size).floor() as i64);
        // the voxel's center maps back to the same voxel
        prop_assert_eq!(voxel_index_of(&v.center(size), size), v);
    }

    #[test]
    fn voxel_boundary_belongs_to_higher_cell(
        k in -1000i64..1000,
        size in prop::sample::select(vec![0.125, 0.25, 0.5, 1.0, 2.0]),
    ) {
        // exact boundary coordinate: k * size is representable for dyadic sizes
        let p = Point3::new(k as f64 * size, 0.25 * size, 0.25 * size);
        prop_assert_eq!(voxel_index_of(&p, size).x, k);
    }

    #[test]
    fn range_image_ignores_point_order(
        (cloud, perm) in scan_points(120).prop_flat_map(|c| {
            let n = c.len();
            (Just(c), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
        }),
    ) {
        let cfg = ProjectionConfig::new(64, 16, 15.0, -15.0).unwrap();
        let shuffled: Vec<Point3> = perm.iter().map(|&i| cloud[i]).collect();
        let a = build_range_image(&cloud, &cfg);
        let b = build_range_image(&shuffled, &cfg);
        prop_assert_eq!(a.num_returns(), b.num_returns());
        for row in 0..cfg.height {
            for col in 0..cfg.width {
                prop_assert_eq!(a.range_at(row, col).to_bits(), b.range_at(row, col).to_bits());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normals_rotate_with_the_cloud(
        frame in rotation(),
        q in rotation(),
        dist in 1.5..5.0f64,
        jitter in prop::collection::vec((-0.3..0.3f64, -0.3..0.3f64), 25),
    ) {
        // planar patch at a safe distance from the viewer at the origin
        let n = frame * Vector3::z();
        let u = frame * Vector3::x();
        let w = frame * Vector3::y();
        let pts: Vec<Point3> = jitter
            .iter()
            .enumerate()
            .map(|(i, (js, jt))| {
                let s = (i % 5) as f64 - 2.0 + js;
                let t = (i / 5) as f64 - 2.0 + jt;
                Point3::from(n * dist + u * s + w * t)
            })
            .collect();
        let rotated: Vec<Point3> = pts.iter().map(|p| Point3::from(q * p.coords)).collect();
        let base = estimate_normals(&pts, 8).unwrap();
        let moved = estimate_normals(&rotated, 8).unwrap();
        for (a, b) in base.normals.iter().zip(&moved.normals) {
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(na), Some(nb)) = (a, b) {
                prop_assert!((q * na - nb).norm() <= 1e-6, "{na:?} vs {nb:?}");
            }
        }
    }

    #[test]
    fn depth_cells_widen_and_stay_consistent(
        num_cells in 1usize..100,
        max_depth in 1.0..80.0f64,
        growth in 1.001..1.5f64,
        range in 0.0..1.2f64,
    ) {
        let d = DepthDiscretization::with_growth(num_cells, max_depth, growth).unwrap();
        let edges = d.edges();
        prop_assert_eq!(edges.len(), num_cells + 1);
        prop_assert_eq!(edges[0], 0.0);
        prop_assert!((d.max_depth() - max_depth).abs() <= 1e-9 * max_depth);
        for k in 1..edges.len() {
            prop_assert!(edges[k] > edges[k - 1]);
            if k >= 2 {
                let prev = edges[k - 1] - edges[k - 2];
                let cur = edges[k] - edges[k - 1];
                prop_assert!(cur >= prev - 1e-12, "widths shrank at cell {k}");
            }
        }
        let r = range * max_depth;
        let cell = d.cell_of(r) as usize;
        prop_assert!((1..=num_cells).contains(&cell));
        if r < max_depth {
            prop_assert!(edges[cell - 1] <= r);
            prop_assert!(cell == num_cells || r < edges[cell]);
        }
    }

    #[test]
    fn requested_first_bin_is_honoured(
        num_cells in 2usize..100,
        max_depth in 10.0..80.0f64,
        frac in 0.05..0.9f64,
    ) {
        let first = frac * max_depth / num_cells as f64;
        let d = DepthDiscretization::with_first_bin(num_cells, max_depth, first).unwrap();
        prop_assert!((d.edges()[1] - first).abs() <= 1e-6 * first);
    }

    #[test]
    fn merge_owner_matches_brute_force(
        specs in prop::collection::vec(
            (
                (-6.0..6.0f64, -6.0..6.0f64, -2.0..2.0f64),
                prop::collection::btree_map(
                    ((-5i64..5), (-5i64..5), (-2i64..2)).prop_map(|(x, y, z)| VoxelIndex::new(x, y, z)),
                    any::<bool>(),
                    5..40,
                ),
            ),
            1..5,
        ),
        voxel_size in 0.3..1.5f64,
    ) {
        let results: Vec<SubmapResult> = specs
            .iter()
            .enumerate()
            .map(|(id, ((x, y, z), verdicts))| SubmapResult {
                id: id as u32,
                pose: PoseSE3::new(Matrix3::identity(), Vector3::new(*x, *y, *z)).unwrap(),
                points: Vec::new(),
                verdicts: mapclean_core::backend::VoxelVerdicts {
                    voxel_size,
                    entries: verdicts.iter().map(|(v, k)| (*v, *k)).collect(),
                },
            })
            .collect();
        let map = merge_submaps(&results, voxel_size);

        let mut expected = BTreeSet::new();
        let mut all: BTreeSet<VoxelIndex> = BTreeSet::new();
        for (_, verdicts) in &specs {
            all.extend(verdicts.keys().copied());
        }
        for v in all {
            let owner = results
                .iter()
                .filter_map(|r| {
                    let keep = r.verdicts.entries.iter().find(|(idx, _)| idx == &v)?.1;
                    let d2 = (v.center(voxel_size).coords - r.pose.translation()).norm_squared();
                    Some(((d2.to_bits(), r.id), keep))
                })
                .min_by_key(|(key, _)| *key)
                .unwrap();
            if owner.1 {
                expected.insert(v);
            }
        }
        let got: BTreeSet<VoxelIndex> = map.occupied_voxels().iter().copied().collect();
        prop_assert_eq!(got, expected);
        // merging the same decomposition again changes nothing
        let again = merge_submaps(&results, voxel_size);
        prop_assert_eq!(map.occupied_voxels(), again.occupied_voxels());
    }

    #[test]
    fn rates_ignore_order_and_duplicates(
        pts in prop::collection::vec((point(), any::<bool>()), 20..200),
        dup in prop::collection::vec(any::<prop::sample::Index>(), 0..30),
        perm_seed in any::<prop::sample::Index>(),
        voxel in prop::sample::select(vec![0.1, 0.25, 0.5]),
    ) {
        let mut pts = pts;
        pts[0].1 = false;
        pts[1].1 = true;
        let points: Vec<Point3> = pts.iter().map(|(p, _)| *p).collect();
        let labels: Vec<bool> = pts.iter().map(|(_, d)| *d).collect();
        let gt = voxelize_ground_truth(&points, &labels, voxel);

        // keep a deterministic half of the cloud as the "cleaned map"
        let kept: Vec<Point3> = points.iter().step_by(2).copied().collect();
        let base = score(&voxelize_cloud(&kept, voxel), &gt).unwrap();

        let mut noisy = kept.clone();
        for idx in &dup {
            noisy.push(*idx.get(&kept));
        }
        let pivot = perm_seed.index(noisy.len());
        noisy.rotate_left(pivot);
        let shuffled = score(&voxelize_cloud(&noisy, voxel), &gt).unwrap();
        prop_assert_eq!(base.preservation_rate, shuffled.preservation_rate);
        prop_assert_eq!(base.removal_rate, shuffled.removal_rate);
        prop_assert_eq!(base.f1, shuffled.f1);

        let pr = base.preservation_rate / 100.0;
        let rr = base.removal_rate / 100.0;
        if pr + rr > 0.0 {
            prop_assert!((base.f1 - 2.0 * pr * rr / (pr + rr)).abs() <= 1e-9);
        } else {
            prop_assert_eq!(base.f1, 0.0);
        }

        let raw = score(&voxelize_cloud(&points, voxel), &gt).unwrap();
        prop_assert_eq!(raw.preservation_rate, 100.0);
    }

    #[test]
    fn config_keys_round_trip(
        window_n in 2usize..30,
        tau in 0.05..2.0f64,
        revert_k in 3usize..40,
        occ in 0.05..0.95f64,
        min_check in 1u32..8,
        jobs in 1usize..8,
        revert in any::<bool>(),
    ) {
        let text = format!(
            "# pipeline settings\n\nwindow_n = {window_n}\nrange_diff_threshold = {tau}\n\
             revert_k = {revert_k}\nocc_prob_threshold = {occ}\nmin_check = {min_check}\n\
             jobs = {jobs}\nrevert_enabled = {revert}\n"
        );
        let mut cfg = PipelineConfig::from_kv_text(&text).unwrap();
        prop_assert_eq!(cfg.frontend.window_n, window_n);
        prop_assert_eq!(cfg.frontend.range_diff_threshold, tau);
        prop_assert_eq!(cfg.frontend.revert_k, revert_k);
        prop_assert_eq!(cfg.backend.occ_prob_threshold, occ);
        prop_assert_eq!(cfg.backend.min_check, min_check);
        prop_assert_eq!(cfg.jobs, jobs);
        prop_assert_eq!(cfg.frontend.revert_enabled, revert);

        let mut manual = PipelineConfig::default();
        for line in text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').unwrap();
            manual.apply_kv(k.trim(), v.trim()).unwrap();
        }
        prop_assert_eq!(manual.frontend.window_n, cfg.frontend.window_n);
        prop_assert_eq!(manual.backend.occ_prob_threshold, cfg.backend.occ_prob_threshold);
        prop_assert!(cfg.apply_kv("no_such_key", "1").is_err());
    }
}

fn shell_frames(clouds: Vec<Vec<Point3>>) -> Vec<Frame> {
    clouds
        .into_iter()
        .enumerate()
        .map(|(i, points)| Frame {
            index: i as u64,
            pose: PoseSE3::new(Matrix3::identity(), Vector3::new(0.4 * i as f64, 0.0, 0.0))
                .unwrap(),
            points,
        })
        .collect()
}

fn small_frontend(tau: f64) -> FrontendConfig {
    FrontendConfig {
        projection: ProjectionConfig::new(128, 16, 15.0, -15.0).unwrap(),
        window_n: 3,
        range_diff_threshold: tau,
        ..FrontendConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn removal_is_monotone_in_threshold(
        clouds in prop::collection::vec(scan_points(150), 3),
        lo in 0.1..1.0f64,
        extra in 0.1..1.0f64,
    ) {
        let frames = shell_frames(clouds);
        let flagged_at = |tau: f64| -> BTreeSet<usize> {
            let mut submap = assemble_submap(&frames, 0).unwrap();
            visibility_removal(&mut submap, &frames, &small_frontend(tau));
            submap
                .states
                .iter()
                .enumerate()
                .filter(|(_, s)| **s == PointState::Dynamic)
                .map(|(i, _)| i)
                .collect()
        };
        let wide = flagged_at(lo);
        let narrow = flagged_at(lo + extra);
        prop_assert!(narrow.is_subset(&wide));
    }

    #[test]
    fn reverting_only_promotes_flagged_points(
        clouds in prop::collection::vec(scan_points(150), 3),
        tau in 0.1..1.0f64,
    ) {
        let frames = shell_frames(clouds);
        let cfg = small_frontend(tau);
        let mut submap = assemble_submap(&frames, 0).unwrap();
        visibility_removal(&mut submap, &frames, &cfg);
        let before = submap.states.clone();
        let raw_static = before.iter().filter(|s| **s == PointState::RawStatic).count();
        let reverted = map_based_revert(&mut submap, &cfg);
        let mut seen_reverted = 0;
        for (b, a) in before.iter().zip(&submap.states) {
            match b {
                PointState::RawStatic => prop_assert_eq!(*a, PointState::RawStatic),
                PointState::Dynamic => {
                    prop_assert_ne!(*a, PointState::RawStatic);
                    seen_reverted += (*a == PointState::Reverted) as usize;
                }
                PointState::Reverted => prop_assert!(false, "fresh removal produced Reverted"),
            }
        }
        prop_assert_eq!(seen_reverted, reverted);
        prop_assert_eq!(submap.num_static(), raw_static + reverted);

        // identical inputs give identical states
        let mut again = assemble_submap(&frames, 0).unwrap();
        visibility_removal(&mut again, &frames, &cfg);
        map_based_revert(&mut again, &cfg);
        prop_assert_eq!(again.states, submap.states);
    }

    #[test]
    fn occupancy_checks_bound_occupancy(
        clouds in prop::collection::vec(scan_points(150), 3),
    ) {
        let cfg = BackendConfig {
            projection: ProjectionConfig::new(128, 16, 15.0, -15.0).unwrap(),
            ..BackendConfig::default()
        };
        let depth = cfg.discretization().unwrap();
        let submaps: Vec<Arc<StaticSubmap>> = clouds
            .into_iter()
            .enumerate()
            .map(|(i, points)| {
                let pose =
                    PoseSE3::new(Matrix3::identity(), Vector3::new(2.0 * i as f64, 0.0, 0.0))
                        .unwrap();
                let world = transform_cloud(&points, &pose);
                Arc::new(StaticSubmap::build(i as u32, pose, world, &cfg, &depth).unwrap())
            })
            .collect();
        let grid = accumulate_occupancy(&submaps[0], &submaps, &cfg, &depth);
        let verdicts = classify_static(&grid, &cfg);
        for (v, cell) in &grid.entries {
            prop_assert!(cell.n_occ <= cell.n_check, "{v:?}: {cell:?}");
            if cell.n_check > 0 {
                prop_assert!((0.0..=1.0).contains(&cell.probability()));
            }
            let keep = cell.n_check < cfg.min_check
                || cell.probability() >= cfg.occ_prob_threshold;
            prop_assert_eq!(verdicts.is_static(v), keep);
        }
    }
}
