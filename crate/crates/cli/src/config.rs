//! Line-oriented experiment configuration: `key = value` pairs under
//! `[section]` headers, all keys lower_snake_case. Unknown keys are errors —
//! a silently ignored typo would corrupt an experiment.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use gptk_core::{Error, Result};

/// Parsed config: section name (empty string for the preamble) to key/value
/// pairs, insertion-order independent.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| bad_line(lineno, raw, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(bad_line(lineno, raw, "empty section name"));
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad_line(lineno, raw, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                return Err(bad_line(lineno, raw, "keys must be lower_snake_case"));
            }
            let prev = sections
                .entry(current.clone())
                .or_default()
                .insert(key.to_string(), value.trim().to_string());
            if prev.is_some() {
                return Err(bad_line(lineno, raw, "duplicate key"));
            }
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("config {}: {}", path.display(), e)))?;
        Self::parse(&text)
    }

    /// Typed view of one section; missing sections read as empty.
    pub fn section<'a>(&'a self, name: &str) -> SectionReader<'a> {
        SectionReader {
            name: name.to_string(),
            pairs: self.sections.get(name),
            consumed: BTreeSet::new(),
        }
    }

    /// Errors if any section other than the allowed ones appears.
    pub fn check_sections(&self, allowed: &[&str]) -> Result<()> {
        for name in self.sections.keys() {
            if !name.is_empty() && !allowed.contains(&name.as_str()) {
                return Err(Error::validation(format!("unknown section [{}]", name)));
            }
            if name.is_empty() && !self.sections[name].is_empty() {
                return Err(Error::validation(
                    "top-level keys are not allowed; use a [section]",
                ));
            }
        }
        Ok(())
    }

    /// Canonical serialization used for run-id hashing.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (sec, pairs) in &self.sections {
            out.push_str(&format!("[{}]\n", sec));
            for (k, v) in pairs {
                out.push_str(&format!("{} = {}\n", k, v));
            }
        }
        out
    }
}

fn bad_line(lineno: usize, raw: &str, why: &str) -> Error {
    Error::validation(format!("config line {}: {} (`{}`)", lineno + 1, why, raw.trim()))
}

/// Reads typed values out of one section and tracks which keys were
/// consumed; [`SectionReader::finish`] rejects leftovers.
pub struct SectionReader<'a> {
    name: String,
    pairs: Option<&'a BTreeMap<String, String>>,
    consumed: BTreeSet<String>,
}

impl<'a> SectionReader<'a> {
    fn raw(&mut self, key: &str) -> Option<&'a str> {
        self.consumed.insert(key.to_string());
        self.pairs.and_then(|p| p.get(key)).map(|s| s.as_str())
    }

    pub fn get_str(&mut self, key: &str) -> Option<String> {
        self.raw(key).map(|s| s.to_string())
    }

    pub fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| {
                Error::validation(format!(
                    "[{}] {}: cannot parse `{}` as {}",
                    self.name,
                    key,
                    s,
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    pub fn get_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        let section = self.name.clone();
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse().map_err(|_| {
                        Error::validation(format!(
                            "[{}] {}: cannot parse list item `{}`",
                            section, key, item
                        ))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Errors on any key in the section that was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some(pairs) = self.pairs {
            for key in pairs.keys() {
                if !self.consumed.contains(key) {
                    return Err(Error::validation(format!(
                        "unknown key `{}` in section [{}]",
                        key, self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_values() {
        let cfg = ConfigFile::parse(
            "[data]\nkind = shapes_a # comment\nn = 100\n\n[train]\nlr = 0.0001\n",
        )
        .unwrap();
        let mut s = cfg.section("data");
        assert_eq!(s.get_str("kind").unwrap(), "shapes_a");
        assert_eq!(s.get::<usize>("n", 0).unwrap(), 100);
        s.finish().unwrap();
        let mut t = cfg.section("train");
        assert_eq!(t.get::<f64>("lr", 0.0).unwrap(), 1e-4);
        t.finish().unwrap();
    }

    #[test]
    fn unknown_keys_and_sections_are_errors() {
        let cfg = ConfigFile::parse("[data]\nkind = shapes_a\ntypo_key = 3\n").unwrap();
        let mut s = cfg.section("data");
        let _ = s.get_str("kind");
        assert!(s.finish().is_err());
        assert!(cfg.check_sections(&["train"]).is_err());
        assert!(cfg.check_sections(&["data"]).is_ok());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(ConfigFile::parse("no_equals_here\n").is_err());
        assert!(ConfigFile::parse("[unterminated\n").is_err());
        assert!(ConfigFile::parse("[s]\nBadKey = 1\n").is_err());
        assert!(ConfigFile::parse("[s]\nk = 1\nk = 2\n").is_err());
        assert!(ConfigFile::parse("top = 1\n")
            .unwrap()
            .check_sections(&[])
            .is_err());
    }

    #[test]
    fn canonical_form_is_order_independent() {
        let a = ConfigFile::parse("[b]\ny = 2\n[a]\nx = 1\n").unwrap();
        let b = ConfigFile::parse("[a]\nx = 1\n[b]\ny = 2\n").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }
}
