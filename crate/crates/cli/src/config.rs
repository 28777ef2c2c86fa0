//! Flat `key = value` run configuration. Keys mirror the long flags; flags
//! given on the command line override the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "docs",
    "embeddings",
    "rules",
    "scores",
    "out",
    "classes",
    "seed",
    "threshold-p",
    "mode",
    "c1",
    "c2",
    "c3",
    "alpha",
    "lr",
    "hidden",
    "max-epochs",
    "patience",
    "clean-fraction",
    "model",
    "split",
    "report",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Input(format!("config line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Input(format!(
                    "config line {}: unknown key `{key}`",
                    n + 1
                )));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Input(format!(
                    "config line {}: duplicate key `{key}`",
                    n + 1
                )));
            }
        }
        Ok(FileConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if present, else the parsed file value.
    pub fn pick<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Input(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn path(&self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.raw(key).map(PathBuf::from))
    }

    pub fn require_path(&self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.path(key, flag)
            .ok_or_else(|| CliError::Input(format!("missing --{key}")))
    }

    /// Comma-separated list; a non-empty flag list wins.
    pub fn list(&self, key: &str, flag: Vec<String>) -> Vec<String> {
        if !flag.is_empty() {
            return flag;
        }
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }
}
