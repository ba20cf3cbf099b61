//! Hot-kernel benchmarks. Each benchmark registers under the active
//! scheduling mode, so `cargo bench` (rayon) and
//! `cargo bench --no-default-features` (sequential fallback) land next to
//! each other in the criterion report for comparison.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::Matrix3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use mapclean_core::backend::{accumulate_occupancy, BackendConfig, StaticSubmap};
use mapclean_core::frontend::{
    assemble_submap, map_based_revert, visibility_removal, FrontendConfig,
};
use mapclean_core::merging::{merge_submaps, SubmapResult};
use mapclean_core::normals::estimate_normals;
use mapclean_core::range_image::build_range_image;
use mapclean_core::{transform_cloud, Frame, Point3, PoseSE3, Vector3, VoxelIndex};

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

/// Ground plane plus two walls, sampled like a coarse scan from `origin_x`.
fn structured_cloud(rng: &mut ChaCha8Rng, n: usize, origin_x: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let r = rng.random_range(2.0..18.0);
            match rng.random_range(0..3u32) {
                0 => Point3::new(r * az.cos(), r * az.sin(), -1.7),
                1 => Point3::new(rng.random_range(-18.0..18.0), 4.0 - origin_x * 0.01, rng.random_range(-1.7..1.3)),
                _ => Point3::new(rng.random_range(-18.0..18.0), -4.0, rng.random_range(-1.7..1.3)),
            }
        })
        .collect()
}

fn scan_frames(num: usize, points_per_frame: usize) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..num)
        .map(|i| {
            let x = 0.4 * i as f64;
            Frame {
                index: i as u64,
                pose: PoseSE3::new(Matrix3::identity(), Vector3::new(x, 0.0, 0.0)).unwrap(),
                points: structured_cloud(&mut rng, points_per_frame, x),
            }
        })
        .collect()
}

fn bench_kernels(c: &mut Criterion) {
    let frames = scan_frames(10, 8192);
    let frontend = FrontendConfig::default();
    let backend = BackendConfig::default();
    let depth = backend.discretization().unwrap();

    let raw = assemble_submap(&frames, 0).unwrap();
    let mut flagged = raw.clone();
    visibility_removal(&mut flagged, &frames, &frontend);

    let submaps: Vec<Arc<StaticSubmap>> = (0..3)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + i as u64);
            let pose =
                PoseSE3::new(Matrix3::identity(), Vector3::new(4.0 * i as f64, 0.0, 0.0)).unwrap();
            let cloud = transform_cloud(&structured_cloud(&mut rng, 30_000, 0.0), &pose);
            Arc::new(StaticSubmap::build(i as u32, pose, cloud, &backend, &depth).unwrap())
        })
        .collect();

    let mut group = c.benchmark_group(format!("range_image/{MODE}"));
    group.bench_function("project_80k", |b| {
        b.iter(|| build_range_image(black_box(&raw.points), &frontend.projection))
    });
    group.finish();

    let mut group = c.benchmark_group(format!("normals/{MODE}"));
    group.sample_size(20);
    group.bench_function("estimate_20k", |b| {
        b.iter(|| estimate_normals(black_box(&submaps[0].points[..20_000]), 10).unwrap())
    });
    group.finish();

    let mut group = c.benchmark_group(format!("frontend/{MODE}"));
    group.sample_size(20);
    group.bench_function("visibility_removal_80k", |b| {
        b.iter_batched(
            || raw.clone(),
            |mut submap| {
                visibility_removal(&mut submap, &frames, &frontend);
                submap
            },
            BatchSize::LargeInput,
        )
    });
    group.bench_function("map_based_revert", |b| {
        b.iter_batched(
            || flagged.clone(),
            |mut submap| {
                map_based_revert(&mut submap, &frontend);
                submap
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();

    let mut group = c.benchmark_group(format!("backend/{MODE}"));
    group.sample_size(10);
    group.bench_function("submap_build_30k", |b| {
        b.iter_batched(
            || submaps[0].points.clone(),
            |cloud| {
                StaticSubmap::build(9, submaps[0].pose, cloud, &backend, &depth).unwrap()
            },
            BatchSize::LargeInput,
        )
    });
    group.bench_function("occupancy_3_submaps", |b| {
        b.iter(|| accumulate_occupancy(black_box(&submaps[0]), &submaps, &backend, &depth))
    });
    group.finish();

    let results: Vec<SubmapResult> = submaps
        .iter()
        .map(|s| {
            let entries: Vec<(VoxelIndex, bool)> = s
                .voxels()
                .iter()
                .enumerate()
                .map(|(i, v)| (*v, i % 7 != 0))
                .collect();
            SubmapResult {
                id: s.id,
                pose: s.pose,
                points: s.points.clone(),
                verdicts: mapclean_core::backend::VoxelVerdicts {
                    voxel_size: backend.voxel_size,
                    entries,
                },
            }
        })
        .collect();
    let mut group = c.benchmark_group(format!("merging/{MODE}"));
    group.bench_function("merge_3_submaps", |b| {
        b.iter(|| merge_submaps(black_box(&results), backend.voxel_size))
    });
    group.finish();
}

/// With rayon compiled in, pin the same kernel to 1-thread and default
/// pools so scheduling overhead shows up in one report.
#[cfg(feature = "parallel")]
fn bench_pool_sizes(c: &mut Criterion) {
    let frames = scan_frames(10, 8192);
    let frontend = FrontendConfig::default();
    let raw = assemble_submap(&frames, 0).unwrap();

    let mut group = c.benchmark_group("pool_threads");
    group.sample_size(20);
    let mut sizes = vec![1, rayon::current_num_threads()];
    sizes.dedup();
    for threads in sizes {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        group.bench_function(format!("visibility_removal/{threads}"), |b| {
            b.iter_batched(
                || raw.clone(),
                |mut submap| {
                    pool.install(|| visibility_removal(&mut submap, &frames, &frontend));
                    submap
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

#[cfg(not(feature = "parallel"))]
fn bench_pool_sizes(_: &mut Criterion) {}

criterion_group!(benches, bench_kernels, bench_pool_sizes);
criterion_main!(benches);
