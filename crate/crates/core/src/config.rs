//! Flat INI-style configuration files.
//!
//! ```text
//! # comment
//! [physical]
//! mass = 0.032
//! [maneuver]
//! kind = sinusoid_xy
//! ```
//!
//! Keys before the first header belong to the unnamed section `""`. Section
//! names may repeat (maneuver suites rely on this); order is preserved.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T> {
        self.value.parse::<T>().map_err(|_| {
            Error::config(
                self.line,
                format!("cannot parse value `{}` for key `{}`", self.value, self.key),
            )
        })
    }

    pub fn f64(&self) -> Result<f64> {
        let x: f64 = self.parse()?;
        if !x.is_finite() {
            return Err(Error::config(self.line, format!("key `{}` must be finite", self.key)));
        }
        Ok(x)
    }

    pub fn bool(&self) -> Result<bool> {
        match self.value.as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(Error::config(
                self.line,
                format!("key `{}` expects a boolean, got `{}`", self.key, self.value),
            )),
        }
    }

    /// Error for a key the consumer does not recognise.
    pub fn unknown(&self, section: &str) -> Error {
        Error::config(self.line, format!("unknown key `{}` in section [{}]", self.key, section))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub sections: Vec<Section>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = vec![Section::default()];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::config(line, "empty section name"));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("expected `key = value`, got `{body}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(line, "empty key"));
            }
            let current = sections.last_mut().expect("at least one section");
            if current.get(key).is_some() {
                return Err(Error::config(line, format!("duplicate key `{key}`")));
            }
            current.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        if sections[0].entries.is_empty() {
            sections.remove(0);
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::unreadable(path, e))?;
        Self::parse(&text)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    /// Rejects any section whose name is not in `known`.
    pub fn check_sections(&self, known: &[&str]) -> Result<()> {
        for s in &self.sections {
            if !known.contains(&s.name.as_str()) {
                return Err(Error::config(s.line, format!("unknown section [{}]", s.name)));
            }
        }
        Ok(())
    }
}

/// Renders `key = value` lines, one per pair.
pub fn render_kv<K: AsRef<str>, V: std::fmt::Display>(pairs: &[(K, V)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k.as_ref());
        out.push_str(" = ");
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_keep_order_and_repeat() {
        let cfg = ConfigFile::parse("a = 1\n[m]\nk = x # c\n[m]\nk = y\n").unwrap();
        assert_eq!(cfg.sections.len(), 3);
        let kinds: Vec<_> = cfg.sections_named("m").map(|s| s.get("k").unwrap().value.clone()).collect();
        assert_eq!(kinds, ["x", "y"]);
        assert_eq!(cfg.section("").unwrap().get("a").unwrap().line, 1);
    }

    #[test]
    fn bad_lines_carry_line_numbers() {
        match ConfigFile::parse("[ok]\nnonsense\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ConfigFile::parse("[x\n").is_err());
        assert!(ConfigFile::parse("[x]\na=1\na=2\n").is_err());
    }

    #[test]
    fn unknown_section_rejected() {
        let cfg = ConfigFile::parse("[bogus]\nk=1\n").unwrap();
        let err = cfg.check_sections(&["physical"]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
