//! Settings for the server and the batch commands.
//!
//! Precedence, lowest first: built-in defaults, the TOML config file,
//! `CONVIS_*` environment variables, command-line flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const DEFAULT_CONFIG_FILE: &str = "convis.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Weight file; the bundled shape classifier when unset.
    pub net: Option<PathBuf>,
    /// Directory of persisted optimization results and top-K lists.
    pub results: PathBuf,
    pub bind: String,
    pub port: u16,
    /// Optimization worker threads.
    pub workers: usize,
    pub session_idle_secs: u64,
    /// Image dataset (directory with `index.csv`) used for top-K deconvs.
    pub data: Option<PathBuf>,
    /// Top-K CSV; defaults to the one stored under `results` for the net.
    pub topk: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            net: None,
            results: PathBuf::from("results"),
            bind: "127.0.0.1".into(),
            port: 8080,
            workers: 2,
            session_idle_secs: 30 * 60,
            data: None,
            topk: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads `path`, or `convis.toml` in the working directory if present.
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let (path, required) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG_FILE), false),
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::from_toml(&text),
            Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(Config::default()),
            Err(e) => Err(ServiceError::io(path, e)),
        }
    }

    /// Overrides fields from `CONVIS_NET`, `CONVIS_RESULTS`, `CONVIS_PORT`,
    /// `CONVIS_BIND`, `CONVIS_WORKERS`, `CONVIS_DATA`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = var("CONVIS_NET") {
            self.net = Some(v.into());
        }
        if let Some(v) = var("CONVIS_RESULTS") {
            self.results = v.into();
        }
        if let Some(v) = var("CONVIS_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("CONVIS_PORT") {
            self.port = v
                .parse()
                .map_err(|_| ServiceError::Config(format!("CONVIS_PORT `{v}` is not a port")))?;
        }
        if let Some(v) = var("CONVIS_WORKERS") {
            self.workers = v
                .parse()
                .map_err(|_| ServiceError::Config(format!("CONVIS_WORKERS `{v}` is not a count")))?;
        }
        if let Some(v) = var("CONVIS_DATA") {
            self.data = Some(v.into());
        }
        Ok(())
    }

    /// File then process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::from_file(path)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn session_idle(&self) -> Duration {
        Duration::from_secs(self.session_idle_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering() {
        let mut cfg = Config::from_toml("port = 9000\nresults = \"/tmp/r\"\n").unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.workers, 2);
        cfg.apply_env(|k| (k == "CONVIS_PORT").then(|| "9100".to_string()))
            .unwrap();
        assert_eq!((cfg.port, cfg.results.as_path()), (9100, Path::new("/tmp/r")));
        assert!(cfg.apply_env(|_| Some("x".into())).is_err());
        assert!(Config::from_toml("prot = 1").is_err());
    }
}
