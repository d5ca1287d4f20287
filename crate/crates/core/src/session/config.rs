use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{PartCatalog, PartId};
use crate::pipeline::PipelineConfig;

pub const DEFAULT_MAX_USERS: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpawnEntry {
    pub part: PartId,
    pub count: u32,
}

/// Session configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default)]
    pub spawn: Vec<SpawnEntry>,
    #[serde(default = "default_session_name")]
    pub session_name: String,
    #[serde(default = "default_max_users")]
    pub max_users: usize,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn default_session_name() -> String {
    "joinery".to_owned()
}

fn default_max_users() -> usize {
    DEFAULT_MAX_USERS
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            spawn: Vec::new(),
            session_name: default_session_name(),
            max_users: DEFAULT_MAX_USERS,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("spawn list references unknown part {0}")]
    UnknownSpawnPart(PartId),
    #[error("max_users must be at least 1")]
    NoSeats,
}

impl SessionConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&bytes)
    }

    pub fn validate(&self, catalog: &PartCatalog) -> Result<(), ConfigError> {
        if self.max_users == 0 {
            return Err(ConfigError::NoSeats);
        }
        for entry in &self.spawn {
            if catalog.part(&entry.part).is_none() {
                return Err(ConfigError::UnknownSpawnPart(entry.part.clone()));
            }
        }
        Ok(())
    }
}
