//! Flat `key=value` parameter files.
//!
//! One entry per line; blank lines and lines starting with `#` are ignored.
//! Vector values are comma separated, matrix rows are separated by `;`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamMap {
    entries: BTreeMap<String, String>,
}

impl ParamMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set(key, value.to_string());
    }

    /// Entries of `other` replace entries of `self`.
    pub fn merge(&mut self, other: &ParamMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("cannot parse `{key}` value `{v}`"))),
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parsed(key)?
            .ok_or_else(|| Error::Parse(format!("missing required parameter `{key}`")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn vector(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_vector(key, v)).transpose()
    }

    pub fn matrix(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        self.get(key)
            .map(|v| v.split(';').map(|row| parse_vector(key, row)).collect())
            .transpose()
    }

    pub fn set_vector(&mut self, key: &str, values: &[f64]) {
        self.set(key, join(values));
    }

    pub fn set_matrix(&mut self, key: &str, rows: &[Vec<f64>]) {
        let text: Vec<String> = rows.iter().map(|r| join(r)).collect();
        self.set(key, text.join(";"));
    }
}

impl fmt::Display for ParamMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_vector(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("cannot parse `{key}` entry `{}`", t.trim())))
        })
        .collect()
}
