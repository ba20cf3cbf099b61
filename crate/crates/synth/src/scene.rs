//! Scene description and its block-based text format.
//!
//! ```text
//! num_frames = 100
//! seed = 7
//!
//! [ground]
//! z = 0
//!
//! [box]
//! min = -10 -5.2 0
//! max =  10 -5.0 3
//!
//! [agent]
//! radius = 0.3
//! height = 1.7
//! speed = 1.2
//! waypoints = -8 2 | 8 2
//!
//! [sensor]
//! z = 1.7
//! speed = 5
//! waypoints = -20 0 | 20 0
//! ```

use mapclean_core::Point3;

use crate::{Result, SynthError};

pub const DEFAULT_SCAN_RATE_HZ: f64 = 10.0;
pub const DEFAULT_MAX_RANGE: f64 = 80.0;

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
    pub scan_rate_hz: f64,
    pub num_frames: usize,
    pub max_range: f64,
    /// Standard deviation of range noise in meters; 0 disables it.
    pub noise_sigma: f64,
    pub ground_z: Option<f64>,
    pub boxes: Vec<Aabb>,
    pub pillars: Vec<Cylinder>,
    pub agents: Vec<AgentSpec>,
    pub sensor: SensorSpec,
}

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// A vertical cylinder that walks its waypoint path back and forth.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub radius: f64,
    pub height: f64,
    pub z_base: f64,
    pub speed: f64,
    pub waypoints: Vec<[f64; 2]>,
}

impl AgentSpec {
    pub fn cylinder_at(&self, t: f64) -> Cylinder {
        let c = polyline_position(&self.waypoints, self.speed, t);
        Cylinder {
            center: c,
            radius: self.radius,
            z_min: self.z_base,
            z_max: self.z_base + self.height,
        }
    }
}

/// The sensor keeps a fixed height and identity orientation while moving
/// along its waypoints.
#[derive(Debug, Clone)]
pub struct SensorSpec {
    pub z: f64,
    pub speed: f64,
    pub waypoints: Vec<[f64; 2]>,
}

impl SensorSpec {
    pub fn position_at(&self, t: f64) -> Point3 {
        let p = polyline_position(&self.waypoints, self.speed, t);
        Point3::new(p[0], p[1], self.z)
    }
}

/// Position after travelling `speed * t` along the polyline, bouncing at
/// the ends so motion never stops.
pub fn polyline_position(waypoints: &[[f64; 2]], speed: f64, t: f64) -> [f64; 2] {
    let first = waypoints[0];
    if waypoints.len() < 2 || speed <= 0.0 {
        return first;
    }
    let lengths: Vec<f64> = waypoints
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .collect();
    let total: f64 = lengths.iter().sum();
    if total <= 1e-12 {
        return first;
    }
    let mut s = (speed * t) % (2.0 * total);
    if s > total {
        s = 2.0 * total - s;
    }
    for (w, len) in waypoints.windows(2).zip(&lengths) {
        if s <= *len {
            if *len <= 1e-12 {
                return w[0];
            }
            let f = s / len;
            return [
                w[0][0] + f * (w[1][0] - w[0][0]),
                w[0][1] + f * (w[1][1] - w[0][1]),
            ];
        }
        s -= len;
    }
    *waypoints.last().unwrap()
}

impl SceneSpec {
    pub fn from_text(text: &str) -> Result<Self> {
        Parser::default().run(text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SynthError::Invalid(msg));
        if self.width == 0 || self.height == 0 {
            return fail("image dimensions must be positive".into());
        }
        if self.fov_up_deg <= self.fov_down_deg {
            return fail("fov_up must exceed fov_down".into());
        }
        if self.scan_rate_hz <= 0.0 {
            return fail("scan_rate_hz must be positive".into());
        }
        if self.num_frames == 0 {
            return fail("num_frames must be positive".into());
        }
        if self.max_range <= 0.0 || self.noise_sigma < 0.0 {
            return fail("max_range must be positive and noise_sigma non-negative".into());
        }
        for b in &self.boxes {
            if (0..3).any(|a| b.min[a] >= b.max[a]) {
                return fail(format!("box {:?}..{:?} has no volume", b.min, b.max));
            }
        }
        for c in &self.pillars {
            if c.radius <= 0.0 || c.z_max <= c.z_min {
                return fail("cylinder needs positive radius and z_max > z_min".into());
            }
        }
        for a in &self.agents {
            if a.radius <= 0.0 || a.height <= 0.0 {
                return fail("agent needs positive radius and height".into());
            }
            if a.waypoints.len() < 2 || a.speed <= 0.0 {
                return fail("agent needs at least two waypoints and positive speed".into());
            }
        }
        if self.sensor.waypoints.is_empty() {
            return fail("sensor needs at least one waypoint".into());
        }
        Ok(())
    }
}

#[derive(Default)]
struct Parser {
    seed: u64,
    width: usize,
    height: usize,
    fov_up_deg: f64,
    fov_down_deg: f64,
    scan_rate_hz: f64,
    num_frames: usize,
    max_range: f64,
    noise_sigma: f64,
    ground_z: Option<f64>,
    boxes: Vec<Aabb>,
    pillars: Vec<Cylinder>,
    agents: Vec<AgentSpec>,
    sensor: Option<SensorSpec>,
    block: Block,
    block_line: usize,
}

#[derive(Default, Clone)]
enum Block {
    #[default]
    Global,
    Ground {
        z: Option<f64>,
    },
    Box {
        min: Option<[f64; 3]>,
        max: Option<[f64; 3]>,
    },
    Cylinder {
        center: Option<[f64; 2]>,
        radius: Option<f64>,
        z_min: f64,
        z_max: Option<f64>,
    },
    Agent {
        radius: Option<f64>,
        height: Option<f64>,
        z_base: f64,
        speed: Option<f64>,
        waypoints: Option<Vec<[f64; 2]>>,
    },
    Sensor {
        z: Option<f64>,
        speed: f64,
        waypoints: Option<Vec<[f64; 2]>>,
    },
}

fn parse_err(line: usize, msg: impl Into<String>) -> SynthError {
    SynthError::Parse {
        line,
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| parse_err(line, format!("bad value `{value}` for `{key}`")))
}

fn triple(line: usize, key: &str, value: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = value
        .split_ascii_whitespace()
        .map(|t| num(line, key, t))
        .collect::<Result<_>>()?;
    v.try_into()
        .map_err(|_| parse_err(line, format!("`{key}` needs three numbers")))
}

fn pair(line: usize, key: &str, value: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = value
        .split_ascii_whitespace()
        .map(|t| num(line, key, t))
        .collect::<Result<_>>()?;
    v.try_into()
        .map_err(|_| parse_err(line, format!("`{key}` needs two numbers")))
}

fn waypoint_list(line: usize, value: &str) -> Result<Vec<[f64; 2]>> {
    value
        .split('|')
        .map(|w| pair(line, "waypoints", w.trim()))
        .collect()
}

impl Parser {
    fn run(mut self, text: &str) -> Result<SceneSpec> {
        self.width = 1024;
        self.height = 32;
        self.fov_up_deg = 15.0;
        self.fov_down_deg = -15.0;
        self.scan_rate_hz = DEFAULT_SCAN_RATE_HZ;
        self.max_range = DEFAULT_MAX_RANGE;

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                self.flush_block()?;
                self.block_line = lineno;
                self.block = match name {
                    "ground" => Block::Ground { z: None },
                    "box" => Block::Box { min: None, max: None },
                    "cylinder" => Block::Cylinder {
                        center: None,
                        radius: None,
                        z_min: 0.0,
                        z_max: None,
                    },
                    "agent" => Block::Agent {
                        radius: None,
                        height: None,
                        z_base: 0.0,
                        speed: None,
                        waypoints: None,
                    },
                    "sensor" => Block::Sensor {
                        z: None,
                        speed: 0.0,
                        waypoints: None,
                    },
                    _ => return Err(parse_err(lineno, format!("unknown block `[{name}]`"))),
                };
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(parse_err(lineno, format!("expected key=value, got `{line}`")));
            };
            self.apply(lineno, key.trim(), value.trim())?;
        }
        self.flush_block()?;

        let Some(sensor) = self.sensor.take() else {
            return Err(SynthError::Invalid("scene needs a [sensor] block".into()));
        };
        let spec = SceneSpec {
            seed: self.seed,
            width: self.width,
            height: self.height,
            fov_up_deg: self.fov_up_deg,
            fov_down_deg: self.fov_down_deg,
            scan_rate_hz: self.scan_rate_hz,
            num_frames: self.num_frames,
            max_range: self.max_range,
            noise_sigma: self.noise_sigma,
            ground_z: self.ground_z,
            boxes: self.boxes,
            pillars: self.pillars,
            agents: self.agents,
            sensor,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        match &mut self.block {
            Block::Global => match key {
                "seed" => self.seed = num(line, key, value)?,
                "width" => self.width = num(line, key, value)?,
                "height" => self.height = num(line, key, value)?,
                "fov_up" => self.fov_up_deg = num(line, key, value)?,
                "fov_down" => self.fov_down_deg = num(line, key, value)?,
                "scan_rate_hz" => self.scan_rate_hz = num(line, key, value)?,
                "num_frames" => self.num_frames = num(line, key, value)?,
                "max_range" => self.max_range = num(line, key, value)?,
                "noise_sigma" => self.noise_sigma = num(line, key, value)?,
                _ => return Err(parse_err(line, format!("unknown global key `{key}`"))),
            },
            Block::Ground { z } => match key {
                "z" => *z = Some(num(line, key, value)?),
                _ => return Err(parse_err(line, format!("unknown ground key `{key}`"))),
            },
            Block::Box { min, max } => match key {
                "min" => *min = Some(triple(line, key, value)?),
                "max" => *max = Some(triple(line, key, value)?),
                _ => return Err(parse_err(line, format!("unknown box key `{key}`"))),
            },
            Block::Cylinder {
                center,
                radius,
                z_min,
                z_max,
            } => match key {
                "center" => *center = Some(pair(line, key, value)?),
                "radius" => *radius = Some(num(line, key, value)?),
                "z_min" => *z_min = num(line, key, value)?,
                "z_max" => *z_max = Some(num(line, key, value)?),
                _ => return Err(parse_err(line, format!("unknown cylinder key `{key}`"))),
            },
            Block::Agent {
                radius,
                height,
                z_base,
                speed,
                waypoints,
            } => match key {
                "radius" => *radius = Some(num(line, key, value)?),
                "height" => *height = Some(num(line, key, value)?),
                "z_base" => *z_base = num(line, key, value)?,
                "speed" => *speed = Some(num(line, key, value)?),
                "waypoints" => *waypoints = Some(waypoint_list(line, value)?),
                _ => return Err(parse_err(line, format!("unknown agent key `{key}`"))),
            },
            Block::Sensor { z, speed, waypoints } => match key {
                "z" => *z = Some(num(line, key, value)?),
                "speed" => *speed = num(line, key, value)?,
                "waypoints" => *waypoints = Some(waypoint_list(line, value)?),
                _ => return Err(parse_err(line, format!("unknown sensor key `{key}`"))),
            },
        }
        Ok(())
    }

    fn flush_block(&mut self) -> Result<()> {
        let line = self.block_line;
        let missing = |what: &str| parse_err(line, format!("block is missing `{what}`"));
        match std::mem::take(&mut self.block) {
            Block::Global => {}
            Block::Ground { z } => {
                self.ground_z = Some(z.ok_or_else(|| missing("z"))?);
            }
            Block::Box { min, max } => {
                self.boxes.push(Aabb {
                    min: min.ok_or_else(|| missing("min"))?,
                    max: max.ok_or_else(|| missing("max"))?,
                });
            }
            Block::Cylinder {
                center,
                radius,
                z_min,
                z_max,
            } => {
                self.pillars.push(Cylinder {
                    center: center.ok_or_else(|| missing("center"))?,
                    radius: radius.ok_or_else(|| missing("radius"))?,
                    z_min,
                    z_max: z_max.ok_or_else(|| missing("z_max"))?,
                });
            }
            Block::Agent {
                radius,
                height,
                z_base,
                speed,
                waypoints,
            } => {
                self.agents.push(AgentSpec {
                    radius: radius.ok_or_else(|| missing("radius"))?,
                    height: height.ok_or_else(|| missing("height"))?,
                    z_base,
                    speed: speed.ok_or_else(|| missing("speed"))?,
                    waypoints: waypoints.ok_or_else(|| missing("waypoints"))?,
                });
            }
            Block::Sensor { z, speed, waypoints } => {
                if self.sensor.is_some() {
                    return Err(parse_err(line, "only one [sensor] block is allowed"));
                }
                self.sensor = Some(SensorSpec {
                    z: z.ok_or_else(|| missing("z"))?,
                    speed,
                    waypoints: waypoints.ok_or_else(|| missing("waypoints"))?,
                });
            }
        }
        Ok(())
    }
}
