//! Flat `key = value` configuration files with section prefixes.
//!
//! ```text
//! # shared options
//! threads = 2
//! out = results.csv
//!
//! sweep.N = 30
//! sweep.C = 2
//! sweep.noise = 1e-4
//! sweep.ratios = 1.0:0.1:3.0
//! sweep.trials = 200
//! sweep.solver = svd-r,svd-q
//! sweep.seed = 42
//! ```
//!
//! Unknown keys are rejected at load time with a message naming the key;
//! command-line flags override config values.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::UsageError;

const GLOBAL_KEYS: &[&str] = &["out", "threads", "timing"];

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "sweep",
        &["N", "C", "noise", "ratios", "trials", "solver", "seed"],
    ),
    ("trial", &["N", "M", "C", "noise", "solver", "seed"]),
    (
        "spectrum",
        &[
            "kind",
            "from-file",
            "obs-file",
            "N",
            "M",
            "C",
            "noise",
            "seed",
        ],
    ),
    (
        "noise-bound",
        &["N", "CM", "C", "noise-levels", "trials", "seed"],
    ),
    (
        "antenna",
        &[
            "N",
            "C",
            "M",
            "ratio",
            "noise",
            "trials",
            "solver",
            "seed",
            "export-operator",
            "source-diameter",
            "measurement-diameter",
            "probe-spacing",
        ],
    ),
];

fn key_is_known(key: &str) -> bool {
    if GLOBAL_KEYS.contains(&key) {
        return true;
    }
    if let Some((section, name)) = key.split_once('.') {
        return SECTIONS
            .iter()
            .any(|(s, keys)| *s == section && keys.contains(&name));
    }
    false
}

/// Parsed configuration file contents.
#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("reading config {}: {e}", path.display()))?;
        let mut entries = HashMap::new();
        for (line_no, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "config {} line {}: expected `key = value`, got {raw_line:?}",
                    path.display(),
                    line_no + 1
                ));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !key_is_known(&key) {
                return Err(format!(
                    "config {} line {}: unknown key {key:?}",
                    path.display(),
                    line_no + 1
                ));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(format!(
                    "config {} line {}: duplicate key {key:?}",
                    path.display(),
                    line_no + 1
                ));
            }
        }
        Ok(Self { entries })
    }

    /// Raw global key lookup.
    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.get(key).cloned()
    }

    /// Typed view of one command's section.
    pub fn section(&self, name: &'static str) -> Result<Section<'_>, UsageError> {
        debug_assert!(SECTIONS.iter().any(|(s, _)| *s == name));
        Ok(Section { config: self, name })
    }
}

pub struct Section<'a> {
    config: &'a ConfigFile,
    name: &'static str,
}

impl Section<'_> {
    /// Raw string value of `<section>.<key>`.
    pub fn raw(&self, key: &str) -> Option<String> {
        self.config
            .entries
            .get(&format!("{}.{key}", self.name))
            .cloned()
    }

    /// Parsed value of `<section>.<key>`; parse failures name the key.
    pub fn value<T: FromStr>(&self, key: &str) -> Result<Option<T>, UsageError> {
        match self.raw(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                UsageError(format!(
                    "config key {}.{key} has unparsable value {raw:?}",
                    self.name
                ))
            }),
        }
    }
}

/// Flag-over-config merge for one value.
pub struct Merge<T> {
    flag_name: &'static str,
    value: Option<T>,
}

impl<T> Merge<T> {
    pub fn new(flag_name: &'static str, flag: Option<T>) -> Self {
        Self {
            flag_name,
            value: flag,
        }
    }

    pub fn config(mut self, fallback: Option<T>) -> Self {
        if self.value.is_none() {
            self.value = fallback;
        }
        self
    }

    pub fn required(self) -> Result<T, UsageError> {
        self.value
            .ok_or_else(|| UsageError(format!("missing required flag {}", self.flag_name)))
    }

    pub fn unwrap_or(self, default: T) -> T {
        self.value.unwrap_or(default)
    }

    pub fn optional(self) -> Option<T> {
        self.value
    }
}
