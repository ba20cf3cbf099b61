//! Binary scan/label files and pose/calibration text files.

use std::fs;
use std::io::Write;
use std::path::Path;

use mapclean_core::{Point3, PoseSE3, Vector3};
use nalgebra::Matrix3;

use crate::{format_err, io_err, parse_err, Result};

/// Reads a binary scan: little-endian f32 `x y z intensity` per point.
/// Intensity is dropped.
pub fn read_scan(path: &Path) -> Result<Vec<Point3>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 16 != 0 {
        return Err(format_err(
            path,
            format!("scan size {} is not a multiple of 16 bytes", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            let y = f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64;
            let z = f32::from_le_bytes([c[8], c[9], c[10], c[11]]) as f64;
            Point3::new(x, y, z)
        })
        .collect())
}

/// Writes a binary scan with zero intensity.
pub fn write_scan(path: &Path, points: &[Point3]) -> Result<()> {
    let mut buf = Vec::with_capacity(points.len() * 16);
    for p in points {
        buf.extend_from_slice(&(p.x as f32).to_le_bytes());
        buf.extend_from_slice(&(p.y as f32).to_le_bytes());
        buf.extend_from_slice(&(p.z as f32).to_le_bytes());
        buf.extend_from_slice(&0f32.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

/// Reads a label file: one little-endian u32 per point.
pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 4 != 0 {
        return Err(format_err(
            path,
            format!("label size {} is not a multiple of 4 bytes", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut buf = Vec::with_capacity(labels.len() * 4);
    for l in labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

/// Semantic class of a raw label: the lower 16 bits (the upper half holds
/// the instance id).
pub fn semantic_label(raw: u32) -> u16 {
    (raw & 0xffff) as u16
}

/// Classes 252..=259 are the moving variants of vehicles and people.
pub fn is_moving_label(raw: u32) -> bool {
    (252..=259).contains(&semantic_label(raw))
}

fn parse_transform_values(values: &[f64]) -> (Matrix3<f64>, Vector3) {
    let r = Matrix3::new(
        values[0], values[1], values[2], values[4], values[5], values[6], values[8], values[9],
        values[10],
    );
    let t = Vector3::new(values[3], values[7], values[11]);
    (r, t)
}

/// Reads a pose file: one pose per line as 12 reals, the upper 3x4 of the
/// homogeneous matrix in row-major order. Rotations are re-orthonormalized,
/// since text files rarely survive the strict validity check.
pub fn read_pose_file(path: &Path) -> Result<Vec<PoseSE3>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_ascii_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, i + 1, format!("bad number: {e}")))?;
        if values.len() != 12 {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected 12 values, got {}", values.len()),
            ));
        }
        let (r, t) = parse_transform_values(&values);
        let pose = PoseSE3::from_matrix_renormalized(r, t)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        poses.push(pose);
    }
    Ok(poses)
}

pub fn write_pose_file(path: &Path, poses: &[PoseSE3]) -> Result<()> {
    let mut out = Vec::new();
    for pose in poses {
        let r = pose.rotation();
        let t = pose.translation();
        let row = [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t[0],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t[1],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[2],
        ];
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        writeln!(out, "{}", line.join(" ")).expect("writing to memory");
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads the `Tr:` line of a calibration file: the sensor-to-camera
/// transform as 12 reals.
pub fn read_calib_tr(path: &Path) -> Result<PoseSE3> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("Tr:") else {
            continue;
        };
        let values: Vec<f64> = rest
            .split_ascii_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, i + 1, format!("bad number: {e}")))?;
        if values.len() != 12 {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected 12 values after Tr:, got {}", values.len()),
            ));
        }
        let (r, t) = parse_transform_values(&values);
        return PoseSE3::from_matrix_renormalized(r, t)
            .map_err(|e| parse_err(path, i + 1, e.to_string()));
    }
    Err(format_err(path, "no Tr: line found"))
}

/// Converts camera-frame poses into sensor-frame poses:
/// `T_sensor = Tr^-1 * T_cam * Tr`.
pub fn apply_calib(poses: &[PoseSE3], tr: &PoseSE3) -> Vec<PoseSE3> {
    let tr_inv = tr.inverse();
    poses.iter().map(|p| tr_inv * *p * *tr).collect()
}
