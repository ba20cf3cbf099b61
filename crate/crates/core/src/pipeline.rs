//! Runs the two-stage pipeline over a frame stream.
//!
//! The front end consumes scans window by window and emits static submap
//! candidates; the back end turns each into a [`StaticSubmap`], queries the
//! shared buffer and prunes voxels. The stages run concurrently, connected
//! by a bounded channel so the front end cannot run arbitrarily far ahead.
//!
//! Results are independent of the thread count: all reductions preserve
//! input order and the back end always queries the submaps with lower or
//! equal id, which by construction are complete when it runs.

use rustc_hash::FxHashSet;
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, Instant};

use crate::backend::{
    accumulate_occupancy, classify_static, extract_static_map, query_nearby_submaps,
    BackendConfig, DepthDiscretization, StaticSubmap, VoxelVerdicts,
};
use crate::config::PipelineConfig;
use crate::frontend::{assemble_submap, map_based_revert, visibility_removal, FrontendConfig};
use crate::geometry::{Frame, Point3, PoseSE3};
use crate::merging::{assemble_cloud, merge_submaps, GlobalMap, SubmapResult};
use crate::voxel::voxel_index_of;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    FrontendOnly,
    BackendOnly,
    NonVisibilityCheck,
    NonIncidentCorrection,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "frontend-only" => Ok(Mode::FrontendOnly),
            "backend-only" => Ok(Mode::BackendOnly),
            "non-visibility-check" => Ok(Mode::NonVisibilityCheck),
            "non-incident-correction" => Ok(Mode::NonIncidentCorrection),
            _ => Err(Error::InvalidConfig(format!("unknown mode `{s}`"))),
        }
    }
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Full,
        Mode::FrontendOnly,
        Mode::BackendOnly,
        Mode::NonVisibilityCheck,
        Mode::NonIncidentCorrection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::FrontendOnly => "frontend-only",
            Mode::BackendOnly => "backend-only",
            Mode::NonVisibilityCheck => "non-visibility-check",
            Mode::NonIncidentCorrection => "non-incident-correction",
        }
    }
}

/// Append-only store of finished submaps, shared between the stages.
#[derive(Debug, Default)]
pub struct SubmapBuffer {
    inner: Mutex<Vec<Arc<StaticSubmap>>>,
}

impl SubmapBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, submap: Arc<StaticSubmap>) {
        self.inner.lock().unwrap().push(submap);
    }

    /// Copies the current contents; later appends do not affect it.
    pub fn snapshot(&self) -> Vec<Arc<StaticSubmap>> {
        self.inner.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineStats {
    pub num_frames: usize,
    pub num_submaps: usize,
    /// Time the front end spent processing, excluding waits.
    pub frontend_active: Duration,
    /// Time the back end spent processing, excluding waits.
    pub backend_active: Duration,
}

impl PipelineStats {
    pub fn frontend_fps(&self) -> f64 {
        rate(self.num_frames, self.frontend_active)
    }

    pub fn backend_submaps_per_s(&self) -> f64 {
        rate(self.num_submaps, self.backend_active)
    }
}

fn rate(count: usize, elapsed: Duration) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let secs = elapsed.as_secs_f64();
    if secs > 0.0 {
        count as f64 / secs
    } else {
        f64::INFINITY
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    /// Merged static map points.
    pub cloud: Vec<Point3>,
    pub global: GlobalMap,
    pub results: Vec<SubmapResult>,
    pub stats: PipelineStats,
}

struct FrontSubmap {
    id: u32,
    pose: PoseSE3,
    points: Vec<Point3>,
}

#[derive(Clone)]
struct WorkPool {
    #[cfg(feature = "parallel")]
    pool: Arc<rayon::ThreadPool>,
}

impl WorkPool {
    #[cfg(feature = "parallel")]
    fn new(jobs: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
        Ok(Self {
            pool: Arc::new(pool),
        })
    }

    #[cfg(not(feature = "parallel"))]
    fn new(_jobs: usize) -> Result<Self> {
        Ok(Self {})
    }

    #[cfg(feature = "parallel")]
    fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    #[cfg(not(feature = "parallel"))]
    fn run<R>(&self, f: impl FnOnce() -> R) -> R {
        f()
    }
}

fn process_window(
    frames: &[Frame],
    id: u32,
    cfg: &FrontendConfig,
    removal: bool,
) -> Result<FrontSubmap> {
    let mut submap = assemble_submap(frames, id)?;
    if removal {
        visibility_removal(&mut submap, frames, cfg);
        if cfg.revert_enabled {
            map_based_revert(&mut submap, cfg);
        }
    }
    Ok(FrontSubmap {
        id: submap.id,
        pose: submap.pose,
        points: submap.static_points().copied().collect(),
    })
}

fn backend_step(
    front: FrontSubmap,
    buffer: &SubmapBuffer,
    cfg: &BackendConfig,
    depth: &DepthDiscretization,
) -> Result<SubmapResult> {
    let submap = Arc::new(StaticSubmap::build(
        front.id,
        front.pose,
        front.points,
        cfg,
        depth,
    )?);
    buffer.append(submap.clone());
    let snapshot = buffer.snapshot();
    let nearby = query_nearby_submaps(&snapshot, &submap.pose, cfg.query_radius);
    let grid = accumulate_occupancy(&submap, &nearby, cfg, depth);
    let verdicts = classify_static(&grid, cfg);
    let points = extract_static_map(&submap.points, &verdicts);
    Ok(SubmapResult {
        id: submap.id,
        pose: submap.pose,
        points,
        verdicts,
    })
}

fn passthrough_result(front: FrontSubmap, voxel_size: f64) -> SubmapResult {
    let voxels: FxHashSet<_> = front
        .points
        .iter()
        .map(|p| voxel_index_of(p, voxel_size))
        .collect();
    let mut entries: Vec<_> = voxels.into_iter().map(|v| (v, true)).collect();
    entries.sort_unstable_by_key(|(v, _)| *v);
    SubmapResult {
        id: front.id,
        pose: front.pose,
        points: front.points,
        verdicts: VoxelVerdicts {
            voxel_size,
            entries,
        },
    }
}

pub fn run_pipeline<I>(frames: I, cfg: &PipelineConfig, mode: Mode) -> Result<PipelineOutput>
where
    I: IntoIterator<Item = Frame>,
    I::IntoIter: Send,
{
    cfg.validate()?;
    let frontend_cfg = cfg.frontend.clone();
    let mut backend_cfg = cfg.backend.clone();
    match mode {
        Mode::NonVisibilityCheck => backend_cfg.visibility_check_enabled = false,
        Mode::NonIncidentCorrection => backend_cfg.incident_correction = false,
        _ => {}
    }
    let removal = mode != Mode::BackendOnly;
    let backend_on = mode != Mode::FrontendOnly;
    let depth = backend_cfg.discretization()?;
    let pool = WorkPool::new(cfg.jobs)?;

    let (results, stats) = if cfg.jobs == 1 {
        run_stages_sequential(
            frames.into_iter(),
            &frontend_cfg,
            &backend_cfg,
            &depth,
            removal,
            backend_on,
            &pool,
        )?
    } else {
        run_stages_concurrent(
            frames.into_iter(),
            &frontend_cfg,
            &backend_cfg,
            &depth,
            removal,
            backend_on,
            cfg.backend_lag,
            &pool,
        )?
    };

    let global = pool.run(|| merge_submaps(&results, backend_cfg.voxel_size));
    let cloud = assemble_cloud(&results, &global);
    Ok(PipelineOutput {
        cloud,
        global,
        results,
        stats,
    })
}

fn run_stages_sequential(
    frames: impl Iterator<Item = Frame>,
    frontend_cfg: &FrontendConfig,
    backend_cfg: &BackendConfig,
    depth: &DepthDiscretization,
    removal: bool,
    backend_on: bool,
    pool: &WorkPool,
) -> Result<(Vec<SubmapResult>, PipelineStats)> {
    let buffer = SubmapBuffer::new();
    let mut results = Vec::new();
    let mut stats = PipelineStats::default();
    let mut window: Vec<Frame> = Vec::with_capacity(frontend_cfg.window_n);
    let mut next_id = 0u32;

    let mut flush = |window: &mut Vec<Frame>, stats: &mut PipelineStats, results: &mut Vec<SubmapResult>| -> Result<()> {
        if window.is_empty() {
            return Ok(());
        }
        let t = Instant::now();
        let front = pool.run(|| process_window(window, next_id, frontend_cfg, removal))?;
        stats.frontend_active += t.elapsed();
        next_id += 1;
        let t = Instant::now();
        let result = if backend_on {
            pool.run(|| backend_step(front, &buffer, backend_cfg, depth))?
        } else {
            passthrough_result(front, backend_cfg.voxel_size)
        };
        stats.backend_active += t.elapsed();
        stats.num_submaps += 1;
        results.push(result);
        window.clear();
        Ok(())
    };

    for frame in frames {
        stats.num_frames += 1;
        window.push(frame);
        if window.len() == frontend_cfg.window_n {
            flush(&mut window, &mut stats, &mut results)?;
        }
    }
    flush(&mut window, &mut stats, &mut results)?;
    Ok((results, stats))
}

#[allow(clippy::too_many_arguments)]
fn run_stages_concurrent(
    frames: impl Iterator<Item = Frame> + Send,
    frontend_cfg: &FrontendConfig,
    backend_cfg: &BackendConfig,
    depth: &DepthDiscretization,
    removal: bool,
    backend_on: bool,
    backend_lag: usize,
    pool: &WorkPool,
) -> Result<(Vec<SubmapResult>, PipelineStats)> {
    let buffer = SubmapBuffer::new();
    let (tx, rx) = mpsc::sync_channel::<FrontSubmap>(backend_lag);

    std::thread::scope(|scope| {
        let producer = scope.spawn(move || -> Result<(usize, Duration)> {
            let mut window: Vec<Frame> = Vec::with_capacity(frontend_cfg.window_n);
            let mut num_frames = 0usize;
            let mut active = Duration::ZERO;
            let mut next_id = 0u32;
            for frame in frames {
                num_frames += 1;
                window.push(frame);
                if window.len() == frontend_cfg.window_n {
                    let t = Instant::now();
                    let front = pool.run(|| process_window(&window, next_id, frontend_cfg, removal))?;
                    active += t.elapsed();
                    window.clear();
                    next_id += 1;
                    if tx.send(front).is_err() {
                        return Ok((num_frames, active));
                    }
                }
            }
            if !window.is_empty() {
                let t = Instant::now();
                let front = pool.run(|| process_window(&window, next_id, frontend_cfg, removal))?;
                active += t.elapsed();
                let _ = tx.send(front);
            }
            Ok((num_frames, active))
        });

        let mut results = Vec::new();
        let mut backend_active = Duration::ZERO;
        let mut backend_err = None;
        for front in rx {
            let t = Instant::now();
            let step = if backend_on {
                pool.run(|| backend_step(front, &buffer, backend_cfg, depth))
            } else {
                Ok(passthrough_result(front, backend_cfg.voxel_size))
            };
            backend_active += t.elapsed();
            match step {
                Ok(result) => results.push(result),
                Err(e) => {
                    backend_err = Some(e);
                    break;
                }
            }
        }

        let (num_frames, frontend_active) = producer
            .join()
            .expect("front-end stage panicked")?;
        if let Some(e) = backend_err {
            return Err(e);
        }
        let stats = PipelineStats {
            num_frames,
            num_submaps: results.len(),
            frontend_active,
            backend_active,
        };
        Ok((results, stats))
    })
}
