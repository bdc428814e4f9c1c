//! Flag, config-file and environment layering.
//!
//! Every setting resolves as: command-line flag, then the `--config` JSON
//! document, then (seeds only) `CYCLELIFE_SEED`, then the built-in default.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "CYCLELIFE_SEED";

/// A problem with how the tool was invoked; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Default)]
pub struct Settings {
    file: Map<String, Value>,
    env_seed: Option<u64>,
}

impl Settings {
    pub fn load(config: Option<&Path>) -> anyhow::Result<Self> {
        let file = match config {
            None => Map::new(),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(map)) => map,
                    Ok(_) => {
                        return Err(usage(format!(
                            "config {} must be a JSON object",
                            path.display()
                        )))
                    }
                    Err(e) => return Err(usage(format!("config {}: {e}", path.display()))),
                }
            }
        };
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                usage(format!(
                    "{SEED_ENV} must be a non-negative integer, got {v:?}"
                ))
            })?),
            Err(_) => None,
        };
        Ok(Self { file, env_seed })
    }

    /// The flag if given, else the config entry under `key`.
    pub fn pick<T: DeserializeOwned>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> anyhow::Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| usage(format!("config key `{key}`: {e}"))),
        }
    }

    pub fn or<T: DeserializeOwned>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> anyhow::Result<T> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn required<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> anyhow::Result<T> {
        self.pick(flag, key)?.ok_or_else(|| {
            usage(format!(
                "missing required setting --{}",
                key.replace('_', "-")
            ))
        })
    }

    pub fn flag(&self, flag: bool, key: &str) -> anyhow::Result<bool> {
        Ok(flag || self.pick(None, key)?.unwrap_or(false))
    }

    /// A seed: flag, config, `CYCLELIFE_SEED`, then 0.
    pub fn seed(&self, flag: Option<u64>, key: &str) -> anyhow::Result<u64> {
        Ok(self.pick(flag, key)?.or(self.env_seed).unwrap_or(0))
    }
}
