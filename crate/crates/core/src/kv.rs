//! Plain-text `key = value` configuration blocks.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! A key may repeat (e.g. one `obstacle` line per building).

use std::collections::BTreeSet;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvBlock {
    entries: Vec<(String, String)>,
}

impl KvBlock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Replaces every occurrence of `key` with a single entry.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.retain(|(k, _)| k != key);
        self.push(key, value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Overlays `other` on top of `self`. Keys present in `other` replace
    /// all of their occurrences in `self`.
    pub fn merge(&mut self, other: &KvBlock) {
        let keys: BTreeSet<&str> = other.entries.iter().map(|(k, _)| k.as_str()).collect();
        self.entries.retain(|(k, _)| !keys.contains(k.as_str()));
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn parse_value<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    /// Fails with [`Error::UnknownKeys`] if any key is outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        let unknown: BTreeSet<String> = self
            .entries
            .iter()
            .filter(|(k, _)| !known.contains(&k.as_str()))
            .map(|(k, _)| k.clone())
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::UnknownKeys(unknown.into_iter().collect()))
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T>(key: &str, value: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::Config(format!("{key}: {s:?}: {e}")))
        })
        .collect()
}
