//! Pipeline configuration shared by every ceremony and analysis.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binding::{ProminentSet, ProminentSetError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid prominent set: {0}")]
    Prominent(#[from] ProminentSetError),
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
}

/// Quantizer divisor, landmark selection, gate tolerance and frame budgets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub q: u32,
    pub prominent_indices: ProminentSet,
    pub frontality_tolerance_px: u32,
    pub enroll_frames: usize,
    pub auth_max_frames: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            q: 8,
            prominent_indices: ProminentSet::default(),
            frontality_tolerance_px: 0,
            enroll_frames: 200,
            auth_max_frames: 200,
        }
    }
}

impl PipelineConfig {
    pub fn validate(self) -> Result<Self, ConfigError> {
        if self.q == 0 {
            return Err(ConfigError::NonPositive("q"));
        }
        if self.enroll_frames == 0 {
            return Err(ConfigError::NonPositive("enroll_frames"));
        }
        if self.auth_max_frames == 0 {
            return Err(ConfigError::NonPositive("auth_max_frames"));
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str::<Self>(text)?.validate()
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
