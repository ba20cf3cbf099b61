use nalgebra::Matrix3;

use crate::par;
use crate::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid transform, stored as rotation matrix plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    r: Matrix3<f64>,
    t: Vector3,
}

impl PoseSE3 {
    /// Builds a pose from a rotation matrix and translation.
    ///
    /// Fails if the matrix is not orthonormal to within `1e-9` or has a
    /// negative determinant.
    pub fn new(r: Matrix3<f64>, t: Vector3) -> Result<Self> {
        let deviation = (r.transpose() * r - Matrix3::identity()).abs().max();
        if deviation > ORTHONORMAL_TOL || r.determinant() < 0.0 {
            return Err(Error::InvalidPose(deviation));
        }
        Ok(Self { r, t })
    }

    /// Builds a pose after projecting the matrix onto the closest rotation.
    ///
    /// Useful for poses read from files, where row-major text with six
    /// significant digits does not survive the strict orthonormality check.
    pub fn from_matrix_renormalized(r: Matrix3<f64>, t: Vector3) -> Result<Self> {
        let svd = r.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::InvalidPose(f64::NAN)),
        };
        let mut d = Matrix3::identity();
        d[(2, 2)] = (u * v_t).determinant().signum();
        Self::new(u * d * v_t, t)
    }

    pub fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3 {
        &self.t
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.r * p.coords + self.t)
    }

    pub fn rotate_vector(&self, v: &Vector3) -> Vector3 {
        self.r * v
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.r.transpose();
        Self {
            r: r_inv,
            t: -(r_inv * self.t),
        }
    }
}

impl std::ops::Mul for PoseSE3 {
    type Output = PoseSE3;

    /// `a * b` applies `b` first, then `a`.
    fn mul(self, rhs: PoseSE3) -> PoseSE3 {
        PoseSE3 {
            r: self.r * rhs.r,
            t: self.r * rhs.t + self.t,
        }
    }
}

/// One LiDAR scan together with the sensor pose that produced it.
///
/// Points are in the sensor frame; `pose` maps them into the world frame.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: u64,
    pub pose: PoseSE3,
    pub points: Vec<Point3>,
}

/// Classification of a submap point as it moves through the front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointState {
    /// Never flagged.
    RawStatic,
    /// Flagged by the visibility test.
    Dynamic,
    /// Flagged, then restored by the reverting stage.
    Reverted,
}

impl PointState {
    /// Points that remain part of the static map.
    pub fn is_static(self) -> bool {
        matches!(self, PointState::RawStatic | PointState::Reverted)
    }
}

/// A group of consecutive scans merged in the world frame.
///
/// `pose` is the pose of the window's middle frame and serves as the
/// submap's query origin in the back end. `points` keeps frame order:
/// all points of the first scan, then the second, and so on.
#[derive(Debug, Clone)]
pub struct Submap {
    pub id: u32,
    pub pose: PoseSE3,
    pub points: Vec<Point3>,
    pub states: Vec<PointState>,
}

impl Submap {
    pub fn static_points(&self) -> impl Iterator<Item = &Point3> {
        self.points
            .iter()
            .zip(&self.states)
            .filter(|(_, s)| s.is_static())
            .map(|(p, _)| p)
    }

    pub fn num_static(&self) -> usize {
        self.states.iter().filter(|s| s.is_static()).count()
    }
}

/// Applies `pose` to every point, preserving order.
pub fn transform_cloud(points: &[Point3], pose: &PoseSE3) -> Vec<Point3> {
    par::map_slice(points, |p| pose.transform_point(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rot_z(angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn rejects_scaled_rotation() {
        let r = rot_z(0.3) * 1.001;
        assert!(matches!(
            PoseSE3::new(r, Vector3::zeros()),
            Err(Error::InvalidPose(_))
        ));
    }

    #[test]
    fn rejects_reflection() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(PoseSE3::new(r, Vector3::zeros()).is_err());
    }

    #[test]
    fn renormalizes_noisy_rotation() {
        let mut r = rot_z(1.2);
        r[(0, 1)] += 3e-5;
        assert!(PoseSE3::new(r, Vector3::zeros()).is_err());
        let pose = PoseSE3::from_matrix_renormalized(r, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let dev = (pose.rotation().transpose() * pose.rotation() - Matrix3::identity())
            .abs()
            .max();
        assert!(dev <= 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let pose = PoseSE3::new(rot_z(0.7), Vector3::new(4.0, -2.0, 0.5)).unwrap();
        let p = Point3::new(1.0, 2.0, 3.0);
        let q = pose.inverse().transform_point(&pose.transform_point(&p));
        assert_relative_eq!(q, p, epsilon = 1e-12);
    }

    #[test]
    fn composition_applies_right_hand_side_first() {
        let a = PoseSE3::new(rot_z(0.5), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let b = PoseSE3::new(rot_z(-0.2), Vector3::new(0.0, 3.0, 0.0)).unwrap();
        let p = Point3::new(2.0, -1.0, 0.25);
        let via_product = (a * b).transform_point(&p);
        let via_steps = a.transform_point(&b.transform_point(&p));
        assert_relative_eq!(via_product, via_steps, epsilon = 1e-12);
    }

    #[test]
    fn transform_cloud_keeps_order() {
        let pose = PoseSE3::new(rot_z(0.1), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let pts = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let out = transform_cloud(&pts, &pose);
        assert_eq!(out.len(), 2);
        assert_relative_eq!(out[0], pose.transform_point(&pts[0]));
        assert_relative_eq!(out[1], pose.transform_point(&pts[1]));
    }
}
