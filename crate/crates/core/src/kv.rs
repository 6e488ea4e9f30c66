//! Minimal plain-text key-value config reader.
//!
//! The format is line oriented: `key = value` entries, `#` comments, and
//! optional `[kind name]` section headers grouping the entries that follow.
//! Used for schema mappings and simulator configuration files.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Section {
    pub kind: String,
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("key {key:?}: expected a number, got {raw:?}"))),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::config(format!("key {key:?}: expected an integer, got {raw:?}"))
            }),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            let ctx = if self.kind.is_empty() {
                "top level".to_string()
            } else {
                format!("[{} {}]", self.kind, self.name)
            };
            Error::config(format!("missing key {key:?} in {ctx}"))
        })
    }
}

/// Parsed document: a top-level section followed by named sections in
/// file order.
#[derive(Debug, Clone)]
pub struct Document {
    pub top: Section,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn sections_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.kind == kind)
    }
}

pub fn parse(text: &str) -> Result<Document> {
    let mut top = Section::default();
    let mut sections: Vec<Section> = vec![];
    let mut current: Option<Section> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(body) = line.strip_prefix('[') {
            let body = body
                .strip_suffix(']')
                .ok_or_else(|| {
                    Error::config(format!("line {}: unclosed section header", lineno + 1))
                })?
                .trim();
            let (kind, name) = match body.split_once(char::is_whitespace) {
                Some((k, n)) => (k.trim(), n.trim()),
                None => (body, ""),
            };
            if kind.is_empty() {
                return Err(Error::config(format!(
                    "line {}: empty section header",
                    lineno + 1
                )));
            }
            if let Some(done) = current.take() {
                sections.push(done);
            }
            current = Some(Section {
                kind: kind.to_string(),
                name: name.to_string(),
                entries: vec![],
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let entry = (key.trim().to_string(), value.trim().to_string());
        match current.as_mut() {
            Some(s) => s.entries.push(entry),
            None => top.entries.push(entry),
        }
    }
    if let Some(done) = current.take() {
        sections.push(done);
    }
    Ok(Document { top, sections })
}
