//! Flag > config file > default resolution.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Resolver {
    file: Map<String, Value>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(file)) => Ok(Self { file }),
            Ok(_) => Err(CliError::new("config", "config file must hold a JSON object")),
            Err(e) => Err(CliError::new("config", format!("config {}: {e}", path.display()))),
        }
    }

    fn from_file<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        let Some(v) = self.file.get(key).or_else(|| self.file.get(&key.replace('-', "_"))) else {
            return Ok(None);
        };
        serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::new("config", format!("config key {key:?}: {e}")))
    }

    pub fn opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.from_file(key),
        }
    }

    pub fn or<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn required<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T, CliError> {
        self.opt(flag, key)?
            .ok_or_else(|| CliError::new("usage", format!("missing required option --{key}")))
    }

    /// Repeatable flags: an empty list means "not given".
    pub fn list<T: DeserializeOwned>(&self, flag: Vec<T>, key: &str) -> Result<Vec<T>, CliError> {
        if !flag.is_empty() {
            return Ok(flag);
        }
        match self.file.get(key).or_else(|| self.file.get(&key.replace('-', "_"))) {
            None => Ok(Vec::new()),
            Some(Value::Array(_)) => Ok(self.from_file(key)?.unwrap_or_default()),
            Some(_) => Ok(self.from_file::<T>(key)?.into_iter().collect()),
        }
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.required(flag, key)
    }
}
