//! Flat `key = value` text files used for run configs, sampling specs and SSVI parameters.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma separated.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: n + 1, msg: "expected key = value".into() })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse { line: n + 1, msg: "empty key".into() });
            }
            if entries.insert(key.clone(), (n + 1, v.trim().to_string())).is_some() {
                return Err(Error::Parse { line: n + 1, msg: format!("duplicate key '{key}'") });
            }
        }
        Ok(Self { entries })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Rejects keys outside `known`, so typos do not silently fall back to defaults.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !known.contains(&key.as_str()) {
                return Err(Error::Parse { line: *line, msg: format!("unknown key '{key}'") });
            }
        }
        Ok(())
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (line, v) = self
            .entries
            .get(key)
            .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing key '{key}'") })?;
        v.parse().map_err(|e| Error::Parse { line: *line, msg: format!("{key}: {e}") })
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if self.contains(key) {
            self.required(key)
        } else {
            Ok(default)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let (line, v) = self
            .entries
            .get(key)
            .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing key '{key}'") })?;
        v.split(',')
            .map(|x| x.trim().parse().map_err(|e| Error::Parse { line: *line, msg: format!("{key}: {e}") }))
            .collect()
    }
}

/// Joins values with commas using the shortest round-tripping representation.
pub fn join_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
