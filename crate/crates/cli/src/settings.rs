//! The optional TOML configuration, kept as a table so single keys can be
//! overridden before it is turned into typed sections.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use wafboost::pipeline::{DataConfig, PipelineConfig};
use wafboost::{AttackType, Error};

pub struct Settings {
    table: toml::Table,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let table = match path {
            None => toml::Table::new(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| config_err(format!("{}: {e}", path.display())))?
            }
        };
        Ok(Settings { table })
    }

    fn get(&self, key: &str) -> Option<&toml::Value> {
        let mut parts = key.split('.');
        let mut value = self.table.get(parts.next()?)?;
        for part in parts {
            value = value.as_table()?.get(part)?;
        }
        Some(value)
    }

    /// Sets a dotted key, creating intermediate tables.
    pub fn set(&mut self, key: &str, value: toml::Value) -> Result<(), Error> {
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().ok_or_else(|| config_err("empty key"))?;
        let mut table = &mut self.table;
        for part in parents {
            table = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| config_err(format!("`{part}` in `{key}` is not a table")))?;
        }
        table.insert(last.to_string(), value);
        Ok(())
    }

    /// Applies `key=value`. The value is read as a TOML literal and falls back
    /// to a plain string.
    pub fn assign(&mut self, assignment: &str) -> Result<(), Error> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("expected KEY=VALUE, got `{assignment}`")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
        self.set(key.trim(), value)
    }

    /// A section deserialized on its own; defaults when absent.
    pub fn section<T: DeserializeOwned + Default>(&self, key: &str) -> Result<T, Error> {
        match self.get(key) {
            None => Ok(T::default()),
            Some(v) => v.clone().try_into().map_err(|e| config_err(format!("[{key}]: {e}"))),
        }
    }

    pub fn data(&self) -> Result<DataConfig, Error> {
        self.section("data")
    }

    pub fn data_or<T: DeserializeOwned>(&self, key: &str, default: T) -> Result<T, Error> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.clone().try_into().map_err(|e| config_err(format!("{key}: {e}"))),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).and_then(toml::Value::as_str).map(PathBuf::from)
    }

    /// The flag, else the configured seed. There is no fallback: runs must be
    /// reproducible.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64, Error> {
        match flag {
            Some(s) => Ok(s),
            None => self
                .data_or::<Option<u64>>("seed", None)?
                .ok_or_else(|| config_err("a seed is required (--seed or `seed` in the config file)")),
        }
    }

    pub fn attack_type(&self, flag: Option<AttackType>) -> Result<AttackType, Error> {
        match flag {
            Some(a) => Ok(a),
            None => self.data_or("attack_type", AttackType::default()),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, Error> {
        if self.get("seed").is_none() {
            return Err(config_err("a seed is required (--seed or `seed` in the config file)"));
        }
        if self.get("run_dir").is_none() {
            return Err(config_err("a run directory is required (--run-dir or `run_dir`)"));
        }
        self.table.clone().try_into().map_err(config_err)
    }
}
