//! Deployment configuration, read from a TOML file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;
use tinker_core::narrator::{Narrator, RemoteConfig, RemoteNarrator, StubNarrator};
use tinker_core::scaffold::ScheduleBook;
use tinker_core::scripts::ScriptSet;
use tinker_core::Resources;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scripts: {0}")]
    Scripts(String),
    #[error("condition files: {0}")]
    Conditions(String),
    #[error("narrator: {0}")]
    Narrator(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarratorSettings {
    pub provider: Provider,
    pub endpoint: Option<String>,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_tokens: u32,
}

impl Default for NarratorSettings {
    fn default() -> Self {
        NarratorSettings {
            provider: Provider::Stub,
            endpoint: None,
            model: "default".into(),
            api_key_env: "TINKER_NARRATOR_KEY".into(),
            timeout_ms: 30_000,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    /// Session logs, one JSON Lines file each.
    pub data_dir: PathBuf,
    /// Replaces the bundled phase scripts.
    pub scripts_dir: Option<PathBuf>,
    /// Replaces the bundled condition schedules.
    pub conditions_dir: Option<PathBuf>,
    /// Bearer token for the HTTP API; unset leaves the API open.
    pub auth_token: Option<String>,
    pub pause_ms: u64,
    pub idle_timeout_ms: u64,
    pub max_duration_ms: u64,
    /// How often open turns are checked for the closing pause.
    pub tick_ms: u64,
    pub narrator: NarratorSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("sessions"),
            scripts_dir: None,
            conditions_dir: None,
            auth_token: None,
            pause_ms: tinker_core::session::PAUSE_MS,
            idle_timeout_ms: 5 * 60_000,
            max_duration_ms: 60 * 60_000,
            tick_ms: 250,
            narrator: NarratorSettings::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        Ok(toml::from_str(&text)?)
    }

    pub fn resources(&self) -> Result<Resources, ConfigError> {
        let scripts = match &self.scripts_dir {
            Some(dir) => ScriptSet::load_dir(dir).map_err(|e| ConfigError::Scripts(e.to_string()))?,
            None => ScriptSet::bundled().clone(),
        };
        let schedules = match &self.conditions_dir {
            Some(dir) => ScheduleBook::load_dir(dir).map_err(|e| ConfigError::Conditions(e.to_string()))?,
            None => ScheduleBook::bundled().clone(),
        };
        Ok(Resources::new(scripts, schedules))
    }

    pub fn narrator(&self) -> Result<Arc<dyn Narrator>, ConfigError> {
        let n = &self.narrator;
        match n.provider {
            Provider::Stub => Ok(Arc::new(StubNarrator)),
            Provider::Remote => {
                let endpoint = n
                    .endpoint
                    .clone()
                    .ok_or_else(|| ConfigError::Narrator("remote provider needs an endpoint".into()))?;
                let remote = RemoteNarrator::new(RemoteConfig {
                    endpoint,
                    model: n.model.clone(),
                    api_key: std::env::var(&n.api_key_env).ok(),
                    timeout_ms: n.timeout_ms,
                    max_tokens: n.max_tokens,
                })
                .map_err(|e| ConfigError::Narrator(e.to_string()))?;
                Ok(Arc::new(remote))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_files() {
        let c: Config = toml::from_str("bind = \"0.0.0.0:9000\"\n[narrator]\nprovider = \"remote\"\nendpoint = \"http://x\"").unwrap();
        assert_eq!(c.bind, "0.0.0.0:9000");
        assert_eq!(c.narrator.provider, Provider::Remote);
        assert_eq!(c.pause_ms, 4_000);
        assert!(toml::from_str::<Config>("colour = 1").is_err());
    }

    #[test]
    fn remote_without_endpoint_is_rejected() {
        let c: Config = toml::from_str("[narrator]\nprovider = \"remote\"").unwrap();
        assert!(matches!(c.narrator(), Err(ConfigError::Narrator(_))));
    }
}
