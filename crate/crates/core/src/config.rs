//! Pipeline configuration and its flat `key=value` text format.

use crate::backend::BackendConfig;
use crate::frontend::FrontendConfig;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub frontend: FrontendConfig,
    pub backend: BackendConfig,
    /// Voxel size used when scoring against ground truth.
    pub eval_voxel_size: f64,
    /// Worker threads; 0 means one per core, 1 forces sequential execution.
    pub jobs: usize,
    /// How many finished submaps the front end may run ahead of the back end.
    pub backend_lag: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frontend: FrontendConfig::default(),
            backend: BackendConfig::default(),
            eval_voxel_size: 0.2,
            jobs: 0,
            backend_lag: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        self.backend.validate()?;
        if self.eval_voxel_size <= 0.0 {
            return Err(Error::InvalidConfig(
                "eval_voxel_size must be positive".into(),
            ));
        }
        if self.backend_lag == 0 {
            return Err(Error::InvalidConfig("backend_lag must be positive".into()));
        }
        Ok(())
    }

    /// Applies one setting. Unknown keys are rejected so typos in config
    /// files fail loudly instead of silently running with defaults.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "projection_width" => {
                let w = parse(key, value)?;
                self.frontend.projection.width = w;
                self.backend.projection.width = w;
            }
            "projection_height" => {
                let h = parse(key, value)?;
                self.frontend.projection.height = h;
                self.backend.projection.height = h;
            }
            "fov_up" => {
                let v = parse(key, value)?;
                self.frontend.projection.fov_up_deg = v;
                self.backend.projection.fov_up_deg = v;
            }
            "fov_down" => {
                let v = parse(key, value)?;
                self.frontend.projection.fov_down_deg = v;
                self.backend.projection.fov_down_deg = v;
            }
            "window_n" => self.frontend.window_n = parse(key, value)?,
            "range_diff_threshold" => self.frontend.range_diff_threshold = parse(key, value)?,
            "revert_enabled" => self.frontend.revert_enabled = parse_bool(key, value)?,
            "revert_k" => self.frontend.revert_k = parse(key, value)?,
            "revert_search_radius" => self.frontend.revert_search_radius = parse(key, value)?,
            "revert_dist_eps" => self.frontend.revert_dist_eps = parse(key, value)?,
            "revert_angle_eps" => self.frontend.revert_angle_eps_deg = parse(key, value)?,
            "revert_use_distance" => self.frontend.revert_use_distance = parse_bool(key, value)?,
            "revert_use_angle" => self.frontend.revert_use_angle = parse_bool(key, value)?,
            "normal_k" => {
                let k = parse(key, value)?;
                self.frontend.normal_k = k;
                self.backend.normal_k = k;
            }
            "query_radius" => self.backend.query_radius = parse(key, value)?,
            "lambda_thres" => self.backend.lambda_thres_deg = parse(key, value)?,
            "depth_num_cells" => self.backend.depth_num_cells = parse(key, value)?,
            "depth_max_depth" => self.backend.depth_max = parse(key, value)?,
            "depth_first_bin" => self.backend.depth_first_bin = parse(key, value)?,
            "occ_prob_threshold" => self.backend.occ_prob_threshold = parse(key, value)?,
            "min_check" => self.backend.min_check = parse(key, value)?,
            "voxel_size" => self.backend.voxel_size = parse(key, value)?,
            "incident_correction" => self.backend.incident_correction = parse_bool(key, value)?,
            "visibility_check" => self.backend.visibility_check_enabled = parse_bool(key, value)?,
            "eval_voxel_size" => self.eval_voxel_size = parse(key, value)?,
            "jobs" => self.jobs = parse(key, value)?,
            "backend_lag" => self.backend_lag = parse(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped. The result is validated as a whole.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_kv_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn merge_kv_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidConfig(format!(
                    "line {}: expected key=value, got `{line}`",
                    lineno + 1
                )));
            };
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: format!("not a valid {}", std::any::type_name::<T>()),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true/false".into(),
        }),
    }
}
