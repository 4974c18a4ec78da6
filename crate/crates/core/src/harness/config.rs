//! Flat `key = value` configuration with `[section]` headers.
//!
//! Lines starting with `#` or `;` are comments. Keys outside any section land
//! in the empty section. Overrides use `section.key=value`.

use super::HarnessError;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let err = |reason: &str| HarnessError::Config {
                origin: origin.to_string(),
                line: n + 1,
                reason: reason.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header"))?;
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(err("empty section name"));
                }
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(err("empty key"));
            }
            cfg.insert(&section, key, v.trim());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn insert(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let bad = || HarnessError::BadArgument(format!("override {assignment:?} is not section.key=value"));
        let (path, value) = assignment.split_once('=').ok_or_else(bad)?;
        let (section, key) = path.trim().rsplit_once('.').unwrap_or(("", path.trim()));
        if key.is_empty() {
            return Err(bad());
        }
        self.insert(section, key, value.trim());
        Ok(())
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Parsed value, or `default` when absent.
    pub fn get_or<V: FromStr>(&self, section: &str, key: &str, default: V) -> Result<V, HarnessError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                HarnessError::BadArgument(format!("{section}.{key} = {raw:?} is not a valid value"))
            }),
        }
    }

    pub fn section(&self, section: &str) -> impl Iterator<Item = (&str, &str)> {
        self.sections
            .get(section)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    /// Every entry as `section.key → value`, sorted.
    pub fn flatten(&self) -> BTreeMap<String, String> {
        self.sections
            .iter()
            .flat_map(|(s, m)| {
                m.iter().map(move |(k, v)| {
                    let key = if s.is_empty() { k.clone() } else { format!("{s}.{k}") };
                    (key, v.clone())
                })
            })
            .collect()
    }
}
