use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use mapclean_core::config::PipelineConfig;
use mapclean_core::evaluation::{score, voxelize_cloud, GroundTruthVoxels};
use mapclean_core::pipeline::{run_pipeline, Mode};
use mapclean_core::{Frame, Point3};
use mapclean_io::{
    export_cloud, is_moving_label, load_sequence, read_cloud, read_config, write_labels,
    write_pose_file, write_scan, CloudFormat, Sequence,
};
use mapclean_synth::{generate_sequence, SceneSpec};

/// Raw label written for synthetic returns; 252 is the first moving class,
/// 40 is plain ground.
const SYNTH_DYNAMIC_LABEL: u32 = 252;
const SYNTH_STATIC_LABEL: u32 = 40;

#[derive(Parser)]
#[command(
    name = "mapclean",
    version,
    about = "Removes moving-object traces from LiDAR point cloud maps"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Clean a scan sequence and export the static map
    Run(RunArgs),
    /// Render a synthetic labelled sequence from a scene file
    Synth(SynthArgs),
    /// Score an exported map against a labelled sequence
    Eval(EvalArgs),
    /// Convert a point cloud between PLY and PCD
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Sequence directory: velodyne/*.bin, poses.txt, optional calib.txt
    /// and labels/*.label
    dataset: PathBuf,
    /// Key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set window_n=6 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// full, frontend-only, backend-only, non-visibility-check or
    /// non-incident-correction
    #[arg(long, default_value = "full")]
    mode: Mode,
    /// Worker threads; 0 uses all cores, 1 runs the stages back to back
    #[arg(long)]
    jobs: Option<usize>,
    /// Only process the first N scans
    #[arg(long)]
    max_frames: Option<usize>,
    /// Write the cleaned map here (.ply or .pcd)
    #[arg(long)]
    export: Option<PathBuf>,
    /// Score the result against the sequence labels
    #[arg(long)]
    eval: bool,
    /// Print the score as a CSV row instead of a block
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description file
    scene: PathBuf,
    /// Output sequence directory
    out: PathBuf,
    /// Override the scene's RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Exported map (.ply or .pcd)
    map: PathBuf,
    /// Labelled sequence the map was built from
    dataset: PathBuf,
    /// Evaluation voxel edge length in meters
    #[arg(long, default_value_t = 0.2)]
    voxel_size: f64,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ExportArgs {
    input: PathBuf,
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here too; only real mistakes are
            // usage errors.
            let code = if err.use_stderr() { USAGE } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Export(args) => cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

const USAGE: u8 = 1;
const DATA: u8 = 2;

/// A mistake in how the tool was invoked, as opposed to a problem with the
/// data it was pointed at.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn classify(err: &anyhow::Error) -> u8 {
    fn core_code(e: &mapclean_core::Error) -> u8 {
        use mapclean_core::Error::*;
        match e {
            InvalidConfig(_) | UnknownKey(_) | BadValue { .. } => USAGE,
            _ => DATA,
        }
    }
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<mapclean_core::Error>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<mapclean_io::IoError>() {
            return match e {
                mapclean_io::IoError::Core(inner) => core_code(inner),
                _ => DATA,
            };
        }
        if cause.is::<mapclean_synth::SynthError>() {
            return DATA;
        }
    }
    DATA
}

/// Pulls frames straight off disk so the pipeline never holds the whole
/// sequence in memory. A read failure ends the stream and parks the error
/// for the caller to pick up afterwards.
struct FrameStream<'a> {
    seq: &'a Sequence,
    next: usize,
    failed: &'a Mutex<Option<mapclean_io::IoError>>,
}

impl Iterator for FrameStream<'_> {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        if self.next >= self.seq.len() {
            return None;
        }
        match self.seq.frame(self.next) {
            Ok(frame) => {
                self.next += 1;
                Some(frame)
            }
            Err(err) => {
                *self.failed.lock().unwrap() = Some(err);
                self.next = self.seq.len();
                None
            }
        }
    }
}

fn build_config(args: &RunArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => read_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    for pair in &args.set {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(UsageError(format!("--set expects KEY=VALUE, got `{pair}`")).into());
        };
        cfg.apply_kv(key.trim(), value.trim())?;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let cfg = build_config(&args)?;
    let mut seq = load_sequence(&args.dataset)?;
    if let Some(n) = args.max_frames {
        seq.truncate(n);
    }
    if seq.is_empty() {
        bail!("no scans to process in {}", args.dataset.display());
    }
    if args.eval && !seq.has_labels() {
        bail!("--eval needs labels/ next to velodyne/");
    }

    let failed = Mutex::new(None);
    let stream = FrameStream {
        seq: &seq,
        next: 0,
        failed: &failed,
    };
    let out = run_pipeline(stream, &cfg, args.mode)?;
    if let Some(err) = failed.into_inner().unwrap() {
        return Err(err.into());
    }

    println!("mode={}", args.mode.as_str());
    println!("num_frames={}", out.stats.num_frames);
    println!("num_submaps={}", out.stats.num_submaps);
    println!("map_points={}", out.cloud.len());
    println!("frontend_fps={:.2}", out.stats.frontend_fps());
    println!("backend_submaps_per_s={:.2}", out.stats.backend_submaps_per_s());

    if let Some(path) = &args.export {
        export_cloud(path, &out.cloud, CloudFormat::from_path(path))?;
        println!("exported={}", path.display());
    }
    if args.eval {
        let gt = dataset_ground_truth(&seq, cfg.eval_voxel_size)?;
        let report = score(&voxelize_cloud(&out.cloud, cfg.eval_voxel_size), &gt)?;
        print_report(&report, args.csv);
    }
    Ok(())
}

fn dataset_ground_truth(seq: &Sequence, voxel_size: f64) -> anyhow::Result<GroundTruthVoxels> {
    let mut gt = GroundTruthVoxels::default();
    for i in 0..seq.len() {
        let frame = seq.frame(i)?;
        let labels = seq.labels(i)?;
        if labels.len() != frame.points.len() {
            bail!(
                "frame {i}: {} labels for {} points",
                labels.len(),
                frame.points.len()
            );
        }
        let world: Vec<(Point3, bool)> = frame
            .points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| (frame.pose.transform_point(p), is_moving_label(l)))
            .collect();
        gt.add_points(world.iter().map(|(p, d)| (p, *d)), voxel_size);
    }
    Ok(gt)
}

fn print_report(report: &mapclean_core::evaluation::EvalReport, csv: bool) {
    if csv {
        println!("{}", mapclean_core::evaluation::EvalReport::csv_header());
        println!("{}", report.csv_row());
    } else {
        print!("{}", report.format_block());
    }
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.scene)
        .with_context(|| format!("reading {}", args.scene.display()))?;
    let mut spec = SceneSpec::from_text(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let frames = generate_sequence(&spec)?;
    write_dataset(&args.out, &frames)?;
    let total: usize = frames.iter().map(|g| g.frame.points.len()).sum();
    println!("frames={}", frames.len());
    println!("points={total}");
    println!("dir={}", args.out.display());
    Ok(())
}

fn write_dataset(dir: &Path, frames: &[mapclean_synth::GeneratedFrame]) -> anyhow::Result<()> {
    let velodyne = dir.join("velodyne");
    let labels_dir = dir.join("labels");
    std::fs::create_dir_all(&velodyne)?;
    std::fs::create_dir_all(&labels_dir)?;
    let mut poses = Vec::with_capacity(frames.len());
    for (i, g) in frames.iter().enumerate() {
        write_scan(&velodyne.join(format!("{i:06}.bin")), &g.frame.points)?;
        let labels: Vec<u32> = g
            .dynamic
            .iter()
            .map(|&d| if d { SYNTH_DYNAMIC_LABEL } else { SYNTH_STATIC_LABEL })
            .collect();
        write_labels(&labels_dir.join(format!("{i:06}.label")), &labels)?;
        poses.push(g.frame.pose.clone());
    }
    write_pose_file(&dir.join("poses.txt"), &poses)?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    if args.voxel_size <= 0.0 {
        return Err(UsageError("voxel size must be positive".into()).into());
    }
    let cloud = read_cloud(&args.map)?;
    let seq = load_sequence(&args.dataset)?;
    if !seq.has_labels() {
        bail!("{} has no labels/ directory", args.dataset.display());
    }
    let gt = dataset_ground_truth(&seq, args.voxel_size)?;
    let report = score(&voxelize_cloud(&cloud, args.voxel_size), &gt)?;
    print_report(&report, args.csv);
    Ok(())
}

fn cmd_export(args: ExportArgs) -> anyhow::Result<()> {
    let cloud = read_cloud(&args.input)?;
    export_cloud(&args.output, &cloud, CloudFormat::from_path(&args.output))?;
    println!("points={}", cloud.len());
    Ok(())
}
