//! Run configuration: every pipeline parameter with its documented default,
//! loadable from a TOML file and echoed into every report.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Metric;
use crate::filters::CascadeConfig;
use crate::vote_image::PropositionParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Vote-image cell size in scene pixels.
    pub bin_size: u32,
    /// Box-blur radius (cells) applied before proposition detection and
    /// rendering.
    pub smooth_radius: u32,
    /// Minimum smoothed cell strength for a proposition.
    pub t_min: f64,
    /// Chebyshev non-maximum-suppression radius in cells.
    pub nms_radius: u32,
    /// Proposition count cap per detection process.
    pub max_props: usize,
    /// Pass-1 gather radius as a fraction of the pattern diagonal.
    pub gather_radius_factor: f64,
    /// Flood-fill bound: pass-1 quad scaled by this factor about its center.
    pub flood_shrink: f64,
    /// Maximum circular hue difference in degrees before a correspondence is
    /// rejected; keypoints without hue always pass.
    pub hue_max_diff_deg: f64,
    /// Descriptor metric for matching.
    pub metric: Metric,
    /// Base seed for the synthetic harness.
    pub seed: u64,
    /// Worker threads across patterns; 0 = available parallelism.
    pub workers: usize,
    pub cascade: CascadeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bin_size: 4,
            smooth_radius: 1,
            t_min: 1.5,
            nms_radius: 2,
            max_props: 512,
            gather_radius_factor: 0.25,
            flood_shrink: 0.8,
            hue_max_diff_deg: 60.0,
            metric: Metric::L2,
            seed: 0,
            workers: 0,
            cascade: CascadeConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bin_size == 0 {
            return Err(ConfigError::Invalid("bin_size must be >= 1".into()));
        }
        if !self.t_min.is_finite() || self.t_min <= 0.0 {
            return Err(ConfigError::Invalid(format!("t_min must be > 0, got {}", self.t_min)));
        }
        if !self.gather_radius_factor.is_finite() || self.gather_radius_factor <= 0.0 {
            return Err(ConfigError::Invalid("gather_radius_factor must be > 0".into()));
        }
        if !(self.flood_shrink > 0.0 && self.flood_shrink <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "flood_shrink must be in (0, 1], got {}",
                self.flood_shrink
            )));
        }
        if self.hue_max_diff_deg < 0.0 {
            return Err(ConfigError::Invalid("hue_max_diff_deg must be >= 0".into()));
        }
        self.cascade.validate().map_err(ConfigError::Invalid)
    }

    pub fn proposition_params(&self) -> PropositionParams {
        PropositionParams {
            smooth_radius: self.smooth_radius,
            t_min: self.t_min,
            nms_radius: self.nms_radius,
            max_props: self.max_props,
        }
    }
}
