//! Flat sectioned key-value configuration: `[section]` headers, `key = value`
//! lines, `#` comments. Values are bare words, quoted strings, numbers, or
//! whitespace-separated lists. Error messages carry the full field path.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, Default)]
pub struct Config {
    /// (section, key) → raw value string.
    values: BTreeMap<(String, String), String>,
    /// Raw text, hashed into output headers.
    raw: String,
}

impl Config {
    pub fn parse(text: &str) -> ConfigResult<Config> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError(format!("line {}: unterminated section", lineno + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let mut value = value.trim().to_string();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = value[1..value.len() - 1].to_string();
            }
            values.insert((section.clone(), key), value);
        }
        Ok(Config {
            values,
            raw: text.to_string(),
        })
    }

    pub fn from_file(path: &std::path::Path) -> ConfigResult<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// FNV-1a hash of the raw config text, for output provenance headers.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.raw.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    pub fn str_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.get(section, key).unwrap_or(default)
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> ConfigResult<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| ConfigError(format!("{section}.{key}: not a number ({e}): `{v}`"))),
        }
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> ConfigResult<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| ConfigError(format!("{section}.{key}: not an integer ({e}): `{v}`"))),
        }
    }

    pub fn list_or(&self, section: &str, key: &str, default: &[f64]) -> ConfigResult<Vec<f64>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split_whitespace()
                .map(|tok| {
                    tok.parse().map_err(|e| {
                        ConfigError(format!("{section}.{key}: bad list entry `{tok}` ({e})"))
                    })
                })
                .collect(),
        }
    }

    pub fn usize_list_or(
        &self,
        section: &str,
        key: &str,
        default: &[usize],
    ) -> ConfigResult<Vec<usize>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split_whitespace()
                .map(|tok| {
                    tok.parse().map_err(|e| {
                        ConfigError(format!("{section}.{key}: bad list entry `{tok}` ({e})"))
                    })
                })
                .collect(),
        }
    }

    pub fn str_list_or(&self, section: &str, key: &str) -> Vec<String> {
        self.get(section, key)
            .map(|v| v.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default()
    }
}
