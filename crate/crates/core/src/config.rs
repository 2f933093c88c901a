//! `key = value` configuration files.
//!
//! ```text
//! # planner
//! planner.endpoint = https://api.example.com/v1/chat/completions
//! planner.model = some-model
//! planner.token_env = PLANNER_API_KEY
//! p_grasp_slip = 0.2
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::planner::HttpChatBackend;
use crate::sim::FaultProfile;

pub const KNOWN_KEYS: &[&str] = &[
    "planner.endpoint",
    "planner.model",
    "planner.token_env",
    "planner.temperature",
    "planner.timeout_secs",
    "planner.max_repair_rounds",
    "p_grasp_slip",
    "p_detect_miss",
    "p_vqa_error",
    "seed",
    "run.max_ticks",
    "bench.trials",
    "bench.seed_base",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("config key {key}: {message}")]
    Value { key: String, message: String },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut config = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Line {
                line,
                message: "expected key = value".into(),
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::Line {
                    line,
                    message: format!("unknown key {key}"),
                });
            }
            if config
                .values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(ConfigError::Line {
                    line,
                    message: format!("duplicate key {key}"),
                });
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Config::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Overrides a value, as command-line flags do.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::Value {
                key: key.into(),
                message: "unknown key".into(),
            });
        }
        self.values.insert(key.into(), value.into());
        Ok(())
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::Value {
                    key: key.into(),
                    message: format!("cannot parse {v:?}"),
                })
            })
            .transpose()
    }

    /// Fault profile from `p_*` keys and `seed`, defaulting to fault-free.
    pub fn faults(&self) -> Result<FaultProfile, ConfigError> {
        let mut profile = FaultProfile::none(self.parsed("seed")?.unwrap_or(0));
        for key in ["p_grasp_slip", "p_detect_miss", "p_vqa_error"] {
            if let Some(v) = self.parsed::<f64>(key)? {
                profile.set(key, v).map_err(|message| ConfigError::Value {
                    key: key.into(),
                    message,
                })?;
            }
        }
        Ok(profile)
    }

    /// HTTP chat backend from `planner.*` keys; endpoint and model are required.
    pub fn http_backend(&self) -> Result<HttpChatBackend, ConfigError> {
        let required = |key: &str| {
            self.get(key)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| ConfigError::Value {
                    key: key.into(),
                    message: "required for the http backend".into(),
                })
        };
        let mut backend = HttpChatBackend::new(required("planner.endpoint")?, required("planner.model")?);
        backend.token_env = self
            .get("planner.token_env")
            .filter(|v| !v.is_empty())
            .map(str::to_string);
        if let Some(t) = self.parsed("planner.temperature")? {
            backend.temperature = t;
        }
        if let Some(secs) = self.parsed::<u64>("planner.timeout_secs")? {
            backend.timeout = Duration::from_secs(secs);
        }
        Ok(backend)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut c = Config::parse("# c\nplanner.model = m\np_grasp_slip = 0.2\nseed=5\n").unwrap();
        assert_eq!(c.get("planner.model"), Some("m"));
        let f = c.faults().unwrap();
        assert_eq!((f.p_grasp_slip, f.seed), (0.2, 5));
        c.set("seed", "9").unwrap();
        assert_eq!(c.faults().unwrap().seed, 9);
        assert!(c.http_backend().is_err());
        c.set("planner.endpoint", "http://x").unwrap();
        let b = c.http_backend().unwrap();
        assert_eq!((b.model.as_str(), b.temperature, b.token_env), ("m", 0.0, None));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            Config::parse("planner.token = secret\n"),
            Err(ConfigError::Line { line: 1, .. })
        ));
        assert!(matches!(
            Config::parse("seed\n"),
            Err(ConfigError::Line { line: 1, .. })
        ));
        assert!(matches!(
            Config::parse("seed=1\nseed=2\n"),
            Err(ConfigError::Line { line: 2, .. })
        ));
        assert!(Config::parse("p_grasp_slip = 1.5\n").unwrap().faults().is_err());
        assert!(Config::parse("seed = x\n").unwrap().faults().is_err());
    }
}
