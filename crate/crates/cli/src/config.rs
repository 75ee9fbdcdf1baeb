//! Flat `key = value` run configuration. Keys are the long flag names; a flag
//! given on the command line wins over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "out",
    "manifest",
    "pattern",
    "landmarks",
    "frames",
    "labels",
    "quotas",
    "condition",
    "split",
    "seed",
    "epochs",
    "lr",
    "momentum",
    "validate-every",
    "batch-size",
    "alpha",
    "num-models",
    "strict",
    "allow-leakage",
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key `{}`", i + 1, k.trim()));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    /// The flag value if given, else the file value, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Malformed(format!("config `{key} = {v}`: {e}"))),
        }
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Malformed(format!("missing --{key} (flag or config entry)")))
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.require(flag, key)
    }

    /// `true` when a boolean switch is set on the command line or in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        self.pick_or(None, key, false)
    }
}
