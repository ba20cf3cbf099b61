//! Sequence directories: `velodyne/*.bin` scans, optional `labels/*.label`,
//! `poses.txt`, and an optional `calib.txt` whose `Tr:` line moves poses
//! into the sensor frame.

use std::path::{Path, PathBuf};

use mapclean_core::{Frame, PoseSE3};

use crate::kitti::{apply_calib, read_calib_tr, read_labels, read_pose_file, read_scan};
use crate::{format_err, io_err, Result};

#[derive(Debug)]
pub struct Sequence {
    dir: PathBuf,
    poses: Vec<PoseSE3>,
    scan_paths: Vec<PathBuf>,
    label_paths: Vec<PathBuf>,
}

fn sorted_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(io_err(dir))?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(extension))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a sequence directory. Poses are returned in the sensor frame;
/// when `calib.txt` is absent the pose file is taken to be in the sensor
/// frame already.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let scan_dir = dir.join("velodyne");
    let scan_paths = sorted_files(&scan_dir, "bin")?;
    if scan_paths.is_empty() {
        return Err(format_err(&scan_dir, "no .bin scans found"));
    }

    let poses_path = dir.join("poses.txt");
    let mut poses = read_pose_file(&poses_path)?;
    if poses.len() < scan_paths.len() {
        return Err(format_err(
            &poses_path,
            format!(
                "{} poses for {} scans",
                poses.len(),
                scan_paths.len()
            ),
        ));
    }
    poses.truncate(scan_paths.len());

    let calib_path = dir.join("calib.txt");
    if calib_path.exists() {
        let tr = read_calib_tr(&calib_path)?;
        poses = apply_calib(&poses, &tr);
    }

    let label_dir = dir.join("labels");
    let label_paths = if label_dir.is_dir() {
        let labels = sorted_files(&label_dir, "label")?;
        if labels.len() < scan_paths.len() {
            return Err(format_err(
                &label_dir,
                format!("{} label files for {} scans", labels.len(), scan_paths.len()),
            ));
        }
        labels
    } else {
        Vec::new()
    };

    Ok(Sequence {
        dir: dir.to_path_buf(),
        poses,
        scan_paths,
        label_paths,
    })
}

impl Sequence {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.scan_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scan_paths.is_empty()
    }

    /// Restricts the sequence to its first `n` frames.
    pub fn truncate(&mut self, n: usize) {
        self.scan_paths.truncate(n);
        self.poses.truncate(n);
        self.label_paths.truncate(n);
    }

    pub fn has_labels(&self) -> bool {
        !self.label_paths.is_empty()
    }

    pub fn pose(&self, i: usize) -> &PoseSE3 {
        &self.poses[i]
    }

    pub fn frame(&self, i: usize) -> Result<Frame> {
        Ok(Frame {
            index: i as u64,
            pose: self.poses[i],
            points: read_scan(&self.scan_paths[i])?,
        })
    }

    pub fn labels(&self, i: usize) -> Result<Vec<u32>> {
        read_labels(&self.label_paths[i])
    }
}
