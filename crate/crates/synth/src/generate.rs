//! Analytic scan rendering: one ray per image pixel, closest surface wins.
//!
//! Ray directions use pixel centers of the same spherical grid the projection
//! code bins into, so a rendered point always lands back in the pixel that
//! produced it.

use mapclean_core::{Frame, Point3, PoseSE3, Vector3};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::{Aabb, Cylinder, SceneSpec};
use crate::Result;

const RAY_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GeneratedFrame {
    pub frame: Frame,
    /// Per-point flag, parallel to `frame.points`: true when the return came
    /// off a moving agent.
    pub dynamic: Vec<bool>,
}

impl GeneratedFrame {
    pub fn world_points(&self) -> Vec<Point3> {
        self.frame
            .points
            .iter()
            .map(|p| self.frame.pose.transform_point(p))
            .collect()
    }
}

fn pixel_direction(spec: &SceneSpec, row: usize, col: usize) -> Vector3 {
    let span = spec.fov_up_deg - spec.fov_down_deg;
    let elev = (spec.fov_up_deg - (row as f64 + 0.5) / spec.height as f64 * span).to_radians();
    let az = -std::f64::consts::PI
        + (col as f64 + 0.5) / spec.width as f64 * std::f64::consts::TAU;
    Vector3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin())
}

fn ray_ground(origin: &Point3, dir: &Vector3, z: f64) -> Option<f64> {
    if dir.z.abs() < 1e-12 {
        return None;
    }
    let t = (z - origin.z) / dir.z;
    (t > RAY_EPS).then_some(t)
}

fn ray_aabb(origin: &Point3, dir: &Vector3, b: &Aabb) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for axis in 0..3 {
        let o = origin[axis];
        let d = dir[axis];
        if d.abs() < 1e-12 {
            if o < b.min[axis] || o > b.max[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let mut near = (b.min[axis] - o) * inv;
        let mut far = (b.max[axis] - o) * inv;
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t_enter = t_enter.max(near);
        t_exit = t_exit.min(far);
        if t_enter > t_exit {
            return None;
        }
    }
    // An origin inside the box sees no surface in front of it.
    (t_enter > RAY_EPS).then_some(t_enter)
}

/// Side surface only; end caps are not sampled.
fn ray_cylinder(origin: &Point3, dir: &Vector3, c: &Cylinder) -> Option<f64> {
    let ox = origin.x - c.center[0];
    let oy = origin.y - c.center[1];
    let a = dir.x * dir.x + dir.y * dir.y;
    if a < 1e-12 {
        return None;
    }
    let half_b = ox * dir.x + oy * dir.y;
    let q = ox * ox + oy * oy - c.radius * c.radius;
    let disc = half_b * half_b - a * q;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    for t in [(-half_b - sq) / a, (-half_b + sq) / a] {
        if t > RAY_EPS {
            let z = origin.z + t * dir.z;
            if z >= c.z_min && z <= c.z_max {
                return Some(t);
            }
        }
    }
    None
}

fn nearest_static_hit(spec: &SceneSpec, origin: &Point3, dir: &Vector3) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: Option<f64>| {
        if let Some(t) = t {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    };
    if let Some(z) = spec.ground_z {
        consider(ray_ground(origin, dir, z));
    }
    for b in &spec.boxes {
        consider(ray_aabb(origin, dir, b));
    }
    for c in &spec.pillars {
        consider(ray_cylinder(origin, dir, c));
    }
    best
}

pub fn generate_frame(spec: &SceneSpec, index: usize) -> Result<GeneratedFrame> {
    spec.validate()?;
    let t = index as f64 / spec.scan_rate_hz;
    let origin = spec.sensor.position_at(t);
    let pose = PoseSE3::new(Matrix3::identity(), origin.coords)
        .expect("identity rotation is orthonormal");
    let agent_cyls: Vec<Cylinder> = spec.agents.iter().map(|a| a.cylinder_at(t)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(
        spec.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    let mut points = Vec::new();
    let mut dynamic = Vec::new();
    for row in 0..spec.height {
        for col in 0..spec.width {
            let dir = pixel_direction(spec, row, col);
            let static_t = nearest_static_hit(spec, &origin, &dir);
            let agent_t = agent_cyls
                .iter()
                .filter_map(|c| ray_cylinder(&origin, &dir, c))
                .fold(None, |best: Option<f64>, t| {
                    Some(best.map_or(t, |b| b.min(t)))
                });
            let (mut range, is_agent) = match (static_t, agent_t) {
                (Some(s), Some(a)) => {
                    if a < s {
                        (a, true)
                    } else {
                        (s, false)
                    }
                }
                (Some(s), None) => (s, false),
                (None, Some(a)) => (a, true),
                (None, None) => continue,
            };
            if range > spec.max_range {
                continue;
            }
            if spec.noise_sigma > 0.0 {
                range = (range + spec.noise_sigma * sample_normal(&mut rng)).max(1e-3);
            }
            points.push(Point3::from(dir * range));
            dynamic.push(is_agent);
        }
    }
    Ok(GeneratedFrame {
        frame: Frame {
            index: index as u64,
            pose,
            points,
        },
        dynamic,
    })
}

pub fn generate_sequence(spec: &SceneSpec) -> Result<Vec<GeneratedFrame>> {
    spec.validate()?;
    (0..spec.num_frames).map(|i| generate_frame(spec, i)).collect()
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
