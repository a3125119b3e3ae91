//! Flat `key=value` configuration.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.set_pair(line).map_err(|_| {
                CliError::config(
                    format!("line {}", i + 1),
                    format!("expected key=value, got `{line}`"),
                )
            })?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config(pair, "expected key=value"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::config(pair, "empty key"));
        }
        self.set(k, v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn require(&self, key: &str) -> CliResult<&str> {
        self.get(key)
            .ok_or_else(|| CliError::config(key, "missing required key"))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::config(key, format!("cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn parse_req<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse_opt(key)?
            .ok_or_else(|| CliError::config(key, "missing required key"))
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    /// Comma-separated list of numbers.
    pub fn parse_list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|e| CliError::config(key, format!("cannot parse `{s}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Seed for stochastic components, falling back to the global `seed`.
    pub fn seed(&self, key: &str) -> CliResult<u64> {
        match self.parse_opt(key)? {
            Some(s) => Ok(s),
            None => self.parse_opt("seed")?.ok_or_else(|| {
                CliError::config(key, "a seed is required for stochastic components")
            }),
        }
    }

    /// Configuration of ensemble member `name`: every key outside the
    /// `ensemble.` and `member.` namespaces, overridden by `member.<name>.*`.
    pub fn member(&self, name: &str) -> Config {
        let prefix = format!("member.{name}.");
        let mut out = Config::default();
        for (k, v) in &self.entries {
            if !k.starts_with("ensemble.") && !k.starts_with("member.") && k != "model" {
                out.set(k, v);
            }
        }
        for (k, v) in &self.entries {
            if let Some(rest) = k.strip_prefix(&prefix) {
                out.set(rest, v);
            }
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
