//! Plain-text artifact plumbing shared by every stage.
//!
//! Artifacts are line-oriented text. Lines starting with `#` are comments;
//! leading comments of the form `# key: value` form the artifact header, which
//! carries the format tag and the fingerprint of the configuration that
//! produced the file.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Ordered `key: value` pairs written as `#` comment lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    /// Header tagged with a versioned format name, e.g. `sectionrec/counts/1`.
    pub fn new(kind: &str) -> Self {
        Header::default().with("format", format!("sectionrec/{kind}/1"))
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    /// Copies every entry of `other` into `self`, overwriting duplicates.
    pub fn merged(mut self, other: &Header) -> Self {
        for (k, v) in &other.entries {
            self.set(k.clone(), v);
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }

    fn parse_line(line: &str) -> Option<(String, String)> {
        let rest = line.strip_prefix("# ")?;
        let (k, v) = rest.split_once(": ")?;
        if k.is_empty() || k.contains(char::is_whitespace) {
            return None;
        }
        Some((k.to_string(), v.to_string()))
    }
}

/// A parsed text artifact: its header and its non-comment body lines.
#[derive(Debug)]
pub struct TextFile {
    pub path: PathBuf,
    pub header: Header,
    /// Body lines paired with their 1-based line number.
    pub lines: Vec<(usize, String)>,
}

impl TextFile {
    pub fn parse_error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .ok_or_else(|| self.parse_error(0, format!("header is missing `{key}`")))
    }

    pub fn require_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| self.parse_error(0, format!("header `{key}` has invalid value {raw:?}")))
    }
}

pub fn open_reader(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Creates (truncating) `path`, creating missing parent directories.
pub fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Runs `body` against a fresh writer for `path` and flushes it.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let mut w = create_writer(path)?;
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<TextFile> {
    let reader = open_reader(path)?;
    let mut header = Header::default();
    let mut lines = Vec::new();
    let mut in_header = true;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') {
            if in_header {
                if let Some((k, v)) = Header::parse_line(&line) {
                    header.set(k, v);
                }
            }
            continue;
        }
        in_header = false;
        if line.trim().is_empty() {
            continue;
        }
        lines.push((idx + 1, line));
    }
    Ok(TextFile {
        path: path.to_path_buf(),
        header,
        lines,
    })
}

/// Splits a tab-separated line into exactly `n` fields.
pub fn split_fields(line: &str, n: usize) -> Option<Vec<&str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    (fields.len() == n).then_some(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips_through_text_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/x.tsv");
        let header = Header::new("demo").with("fingerprint", "abc123").with("k", 4);
        write_file(&path, |w| {
            header.write_to(w)?;
            writeln!(w, "1\tfoo")?;
            writeln!(w, "# trailing comment: ignored")?;
            writeln!(w, "2\tbar")
        })
        .unwrap();
        let text = read_text(&path).unwrap();
        assert_eq!(text.header, header);
        assert_eq!(text.require_parsed::<usize>("k").unwrap(), 4);
        assert_eq!(
            text.lines,
            vec![(4, "1\tfoo".to_string()), (6, "2\tbar".to_string())]
        );
    }

    #[test]
    fn set_overwrites_existing_key() {
        let mut h = Header::new("demo");
        h.set("seed", 1);
        h.set("seed", 2);
        assert_eq!(h.get("seed"), Some("2"));
        assert_eq!(h.entries().count(), 2);
    }
}
