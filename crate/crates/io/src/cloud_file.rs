//! ASCII point-cloud export and the matching readers.

use std::fs;
use std::io::Write;
use std::path::Path;

use mapclean_core::Point3;

use crate::{format_err, io_err, parse_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Pcd,
}

impl CloudFormat {
    /// Picks the format from a file extension, defaulting to PLY.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pcd") => CloudFormat::Pcd,
            _ => CloudFormat::Ply,
        }
    }
}

/// Writes the cloud as ASCII with six decimal places. Output depends only
/// on the point sequence, so identical runs produce identical bytes.
pub fn export_cloud(path: &Path, points: &[Point3], format: CloudFormat) -> Result<()> {
    let mut out: Vec<u8> = Vec::with_capacity(64 + points.len() * 32);
    match format {
        CloudFormat::Ply => {
            write!(
                out,
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
                points.len()
            )
            .expect("writing to memory");
        }
        CloudFormat::Pcd => {
            write!(
                out,
                "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n",
                n = points.len()
            )
            .expect("writing to memory");
        }
    }
    for p in points {
        writeln!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z).expect("writing to memory");
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads a cloud written by [`export_cloud`], detecting the format from
/// the header.
pub fn read_cloud(path: &Path) -> Result<Vec<Point3>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let Some((_, first)) = lines.next() else {
        return Err(format_err(path, "empty file"));
    };
    if first.trim() == "ply" {
        read_ply(path, lines)
    } else if first.starts_with("# .PCD") || first.starts_with("VERSION") {
        read_pcd(path, lines)
    } else {
        Err(format_err(path, "unrecognized point cloud header"))
    }
}

fn read_ply<'a>(
    path: &Path,
    mut lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vec<Point3>> {
    let mut count: Option<usize> = None;
    for (i, line) in lines.by_ref() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| parse_err(path, i + 1, "bad vertex count"))?,
            );
        } else if line == "end_header" {
            break;
        }
    }
    let Some(count) = count else {
        return Err(format_err(path, "header missing `element vertex`"));
    };
    read_ascii_points(path, lines, count)
}

fn read_pcd<'a>(
    path: &Path,
    mut lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vec<Point3>> {
    let mut count: Option<usize> = None;
    for (i, line) in lines.by_ref() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("POINTS") {
            count = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| parse_err(path, i + 1, "bad point count"))?,
            );
        } else if let Some(rest) = line.strip_prefix("DATA") {
            if rest.trim() != "ascii" {
                return Err(parse_err(path, i + 1, "only ascii data is supported"));
            }
            break;
        }
    }
    let Some(count) = count else {
        return Err(format_err(path, "header missing `POINTS`"));
    };
    read_ascii_points(path, lines, count)
}

fn read_ascii_points<'a>(
    path: &Path,
    lines: impl Iterator<Item = (usize, &'a str)>,
    count: usize,
) -> Result<Vec<Point3>> {
    let mut points = Vec::with_capacity(count);
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_ascii_whitespace().map(|tok| tok.parse::<f64>());
        let (Some(Ok(x)), Some(Ok(y)), Some(Ok(z))) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, i + 1, "expected three coordinates"));
        };
        points.push(Point3::new(x, y, z));
    }
    if points.len() != count {
        return Err(format_err(
            path,
            format!("header declares {count} points, found {}", points.len()),
        ));
    }
    Ok(points)
}
