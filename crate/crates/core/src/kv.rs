//! Plain-text `key = value` dialect shared by the robot description, reward
//! config, randomization table and kinematic rule files.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # full-line comment
//! fl.thigh.length = 0.12
//! fl.hip.limit = -0.68, 0.68
//! scale_mode = dynamic
//! ```
//!
//! Keys are `[a-z0-9_.]+` (ASCII lowercase). Blank lines and lines whose first
//! non-space character is `#` are ignored. Duplicate keys are rejected. Readers
//! consume keys as they go and [`KvReader::finish`] rejects any key that was not
//! consumed, so typos surface as errors instead of silently using defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Parse or schema error, located at a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct KvError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl KvError {
    fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
    pub key_column: usize,
    pub value_column: usize,
}

/// Parsed document, entries in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDocument {
    entries: Vec<KvEntry>,
}

impl KvDocument {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries: Vec<KvEntry> = Vec::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let indent = raw.len() - trimmed.len();
            let Some(eq) = raw.find('=') else {
                return Err(KvError::at(line, indent + 1, "expected `key = value`"));
            };
            let key_part = &raw[..eq];
            let key = key_part.trim();
            let key_column = indent + 1;
            if key.is_empty() {
                return Err(KvError::at(line, key_column, "empty key"));
            }
            if let Some(pos) = key
                .char_indices()
                .find(|(_, c)| !(c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '_' || *c == '.'))
                .map(|(i, _)| i)
            {
                return Err(KvError::at(
                    line,
                    key_column + pos,
                    format!("invalid character in key `{key}`"),
                ));
            }
            let value_raw = &raw[eq + 1..];
            let value = value_raw.trim();
            let value_column = eq + 2 + (value_raw.len() - value_raw.trim_start().len());
            if value.is_empty() {
                return Err(KvError::at(line, eq + 2, format!("missing value for `{key}`")));
            }
            if let Some(first) = seen.get(key) {
                return Err(KvError::at(
                    line,
                    key_column,
                    format!("duplicate key `{key}` (first defined on line {first})"),
                ));
            }
            seen.insert(key.to_string(), line);
            entries.push(KvEntry {
                key: key.to_string(),
                value: value.to_string(),
                line,
                key_column,
                value_column,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[KvEntry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&KvEntry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn reader(&self) -> KvReader<'_> {
        KvReader {
            doc: self,
            consumed: vec![false; self.entries.len()],
        }
    }
}

/// Typed, consuming view over a [`KvDocument`].
pub struct KvReader<'a> {
    doc: &'a KvDocument,
    consumed: Vec<bool>,
}

impl<'a> KvReader<'a> {
    fn lookup(&mut self, key: &str) -> Option<&'a KvEntry> {
        let idx = self.doc.entries.iter().position(|e| e.key == key)?;
        self.consumed[idx] = true;
        Some(&self.doc.entries[idx])
    }

    fn missing(&self, key: &str) -> KvError {
        let line = self.doc.entries.last().map_or(1, |e| e.line);
        KvError::at(line, 1, format!("missing required key `{key}`"))
    }

    pub fn has(&self, key: &str) -> bool {
        self.doc.get(key).is_some()
    }

    /// Keys that start with `prefix`, in file order, not yet consumed.
    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.doc
            .entries
            .iter()
            .zip(&self.consumed)
            .filter(|(e, used)| !**used && e.key.starts_with(prefix))
            .map(|(e, _)| e.key.clone())
            .collect()
    }

    pub fn str(&mut self, key: &str) -> Result<&'a str, KvError> {
        match self.lookup(key) {
            Some(e) => Ok(e.value.as_str()),
            None => Err(self.missing(key)),
        }
    }

    pub fn opt_str(&mut self, key: &str) -> Option<&'a str> {
        self.lookup(key).map(|e| e.value.as_str())
    }

    pub fn f64(&mut self, key: &str) -> Result<f64, KvError> {
        let entry = self.lookup(key).ok_or_else(|| self.missing(key))?;
        let mut values = parse_numbers(entry)?;
        if values.len() != 1 {
            return Err(KvError::at(
                entry.line,
                entry.value_column,
                format!("`{key}` expects one number, found {}", values.len()),
            ));
        }
        Ok(values.remove(0))
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, KvError> {
        if self.has(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn u64(&mut self, key: &str) -> Result<u64, KvError> {
        let entry = self.lookup(key).ok_or_else(|| self.missing(key))?;
        entry.value.parse::<u64>().map_err(|_| {
            KvError::at(
                entry.line,
                entry.value_column,
                format!("`{key}` expects a non-negative integer, found `{}`", entry.value),
            )
        })
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, KvError> {
        if self.has(key) {
            self.u64(key)
        } else {
            Ok(default)
        }
    }

    pub fn numbers<const N: usize>(&mut self, key: &str) -> Result<[f64; N], KvError> {
        let entry = self.lookup(key).ok_or_else(|| self.missing(key))?;
        let values = parse_numbers(entry)?;
        values.try_into().map_err(|v: Vec<f64>| {
            KvError::at(
                entry.line,
                entry.value_column,
                format!("`{key}` expects {N} comma-separated numbers, found {}", v.len()),
            )
        })
    }

    pub fn numbers_or<const N: usize>(&mut self, key: &str, default: [f64; N]) -> Result<[f64; N], KvError> {
        if self.has(key) {
            self.numbers(key)
        } else {
            Ok(default)
        }
    }

    /// Location of a key, for errors raised after parsing (range checks).
    pub fn locate(&self, key: &str) -> (usize, usize) {
        self.doc
            .get(key)
            .map_or((1, 1), |e| (e.line, e.value_column))
    }

    pub fn invalid(&self, key: &str, message: impl Into<String>) -> KvError {
        let (line, column) = self.locate(key);
        KvError::at(line, column, message)
    }

    /// Rejects any key that was never read.
    pub fn finish(self) -> Result<(), KvError> {
        match self
            .doc
            .entries
            .iter()
            .zip(&self.consumed)
            .find(|(_, used)| !**used)
        {
            Some((e, _)) => Err(KvError::at(e.line, e.key_column, format!("unknown key `{}`", e.key))),
            None => Ok(()),
        }
    }
}

fn parse_numbers(entry: &KvEntry) -> Result<Vec<f64>, KvError> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    for piece in entry.value.split(',') {
        let lead = piece.len() - piece.trim_start().len();
        let token = piece.trim();
        let column = entry.value_column + offset + lead;
        let value: f64 = token.parse().map_err(|_| {
            KvError::at(entry.line, column, format!("`{}`: `{token}` is not a number", entry.key))
        })?;
        if !value.is_finite() {
            return Err(KvError::at(entry.line, column, format!("`{}`: value must be finite", entry.key)));
        }
        out.push(value);
        offset += piece.len() + 1;
    }
    Ok(out)
}

/// Builds a document in the same dialect. Numbers use the shortest
/// representation that parses back to the same `f64`.
#[derive(Debug, Default)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        for line in text.lines() {
            let _ = writeln!(self.out, "# {line}");
        }
        self
    }

    pub fn blank(&mut self) -> &mut Self {
        self.out.push('\n');
        self
    }

    pub fn str(&mut self, key: &str, value: &str) -> &mut Self {
        let _ = writeln!(self.out, "{key} = {value}");
        self
    }

    pub fn f64(&mut self, key: &str, value: f64) -> &mut Self {
        let _ = writeln!(self.out, "{key} = {value}");
        self
    }

    pub fn numbers(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(self.out, "{key} = {}", joined.join(", "));
        self
    }

    pub fn finish(&mut self) -> String {
        std::mem::take(&mut self.out)
    }
}
