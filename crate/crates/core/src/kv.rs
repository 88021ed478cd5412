//! Flat `key = value` configuration files.
//!
//! Keys may carry dotted sections (`pipeline.batch_size`) and indexed
//! sections (`learners[0].patch_size`). `#` starts a comment. Values are
//! bare words, numbers, or double-quoted strings.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let value = unquote(value.trim());
            if entries.insert(key.to_string(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Parses `key` if present, otherwise returns `default`.
    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`"))),
        }
    }

    /// Number of `prefix[i].*` sections, requiring indices to be contiguous from 0.
    pub fn section_count(&self, prefix: &str) -> Result<usize> {
        let mut indices = Vec::new();
        let open = format!("{prefix}[");
        for key in self.keys() {
            if let Some(rest) = key.strip_prefix(&open) {
                let close = rest
                    .find(']')
                    .ok_or_else(|| Error::Config(format!("malformed key `{key}`")))?;
                let idx: usize = rest[..close]
                    .parse()
                    .map_err(|_| Error::Config(format!("malformed index in `{key}`")))?;
                indices.push(idx);
            }
        }
        indices.sort_unstable();
        indices.dedup();
        for (expected, got) in indices.iter().enumerate() {
            if expected != *got {
                return Err(Error::Config(format!(
                    "`{prefix}` sections must be numbered from 0 without gaps"
                )));
            }
        }
        Ok(indices.len())
    }

    /// Serializes back to text; keys sorted so output is canonical.
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

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(value: &str) -> String {
    if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
        value[1..value.len() - 1].to_string()
    } else {
        value.to_string()
    }
}
