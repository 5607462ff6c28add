//! Server configuration: a TOML file, then `ECCOLA_*` environment overrides.

use std::path::{Path, PathBuf};

use eccola_deploy::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    pub storage_dir: PathBuf,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            storage_dir: PathBuf::from("sessions"),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::OutOfRange(format!("config: {e}")))
    }

    /// Reads `path` if given, then applies `ECCOLA_BIND`, `ECCOLA_PORT` and
    /// `ECCOLA_STORAGE_DIR` from `env`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut config = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p)?)?,
            None => ServerConfig::default(),
        };
        if let Some(bind) = env("ECCOLA_BIND") {
            config.bind = bind;
        }
        if let Some(port) = env("ECCOLA_PORT") {
            config.port = port
                .parse()
                .map_err(|_| Error::OutOfRange(format!("ECCOLA_PORT {port:?} is not a port")))?;
        }
        if let Some(dir) = env("ECCOLA_STORAGE_DIR") {
            config.storage_dir = PathBuf::from(dir);
        }
        Ok(config)
    }

    pub fn address(&self) -> String {
        format!("{}:{}", self.bind, self.port)
    }
}
