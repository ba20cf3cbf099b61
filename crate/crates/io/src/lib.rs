//! File formats: binary scans and labels, pose files, calibration,
//! sequence directories, and ASCII point-cloud export.

mod cloud_file;
mod kitti;
mod sequence;

pub use cloud_file::{export_cloud, read_cloud, CloudFormat};
pub use kitti::{
    apply_calib, is_moving_label, read_calib_tr, read_labels, read_pose_file, read_scan,
    semantic_label, write_labels, write_pose_file, write_scan,
};
pub use sequence::{load_sequence, Sequence};

use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Core(#[from] mapclean_core::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub(crate) fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Reads a pipeline configuration from a `key = value` file.
pub fn read_config(path: &Path) -> Result<mapclean_core::config::PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(mapclean_core::config::PipelineConfig::from_kv_text(&text)?)
}
