//! Key/value run configuration with per-command sections.
//!
//! ```text
//! # comment
//! [train]
//! epochs = 50
//! learning-rate = 0.12
//! ```
//!
//! Values are kept as strings; consumers parse them where the type is
//! known. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "unterminated section header".into(),
                })?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "empty key".into(),
                });
            }
            let mut value = value.trim().to_string();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = value[1..value.len() - 1].to_string();
            }
            sections
                .entry(current.clone())
                .or_default()
                .insert(key, value);
        }
        Ok(RunConfig { sections })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Look up `key` in `section`, falling back to the top-level section.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .or_else(|| self.sections.get("").and_then(|s| s.get(key)))
            .map(String::as_str)
    }
}

/// Render a resolved section back to the config syntax, keys sorted.
pub fn render_section(section: &str, values: &BTreeMap<String, String>) -> String {
    let mut out = format!("[{section}]\n");
    for (k, v) in values {
        let needs_quotes = v.is_empty() || v.chars().any(|c| c.is_whitespace() || c == '#');
        if needs_quotes {
            out.push_str(&format!("{k} = \"{v}\"\n"));
        } else {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}
