//! Plain-text result files: one `key = value` per line, written atomically.

use certl_core::camera::AircraftState;
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

/// Writes via a temporary file in the target directory plus a rename, so a
/// crash never leaves a half-written file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path)?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum TextFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed line {line} in {path}: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: missing key {key}")]
    MissingKey { path: String, key: String },
}

/// Ordered key/value pairs; the writer emits keys in insertion order so
/// identical inputs produce byte-identical files.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    pairs: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> KeyValues {
        KeyValues::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        // {:?} prints the shortest decimal that parses back to the same f64.
        self.pairs.push((key.to_string(), format!("{value:?}")));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, key: &str, path: &Path) -> Result<&str, TextFileError> {
        self.get(key).ok_or_else(|| TextFileError::MissingKey {
            path: path.display().to_string(),
            key: key.to_string(),
        })
    }

    pub fn require_f64(&self, key: &str, path: &Path) -> Result<f64, TextFileError> {
        let raw = self.require(key, path)?;
        raw.parse().map_err(|_| TextFileError::MalformedLine {
            path: path.display().to_string(),
            line: self.line_of(key),
            reason: format!("{key} is not a number: {raw}"),
        })
    }

    /// Space-separated list of exactly `N` floats under one key.
    pub fn require_floats<const N: usize>(
        &self,
        key: &str,
        path: &Path,
    ) -> Result<[f64; N], TextFileError> {
        let raw = self.require(key, path)?;
        let bad = |reason: String| TextFileError::MalformedLine {
            path: path.display().to_string(),
            line: self.line_of(key),
            reason,
        };
        let parts: Vec<f64> = raw
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("{key} is not numeric: {raw}")))?;
        parts
            .try_into()
            .map_err(|_| bad(format!("{key} needs exactly {N} numbers")))
    }

    fn line_of(&self, key: &str) -> usize {
        self.pairs.iter().position(|(k, _)| k == key).map_or(0, |i| i + 1)
    }

    pub fn encode(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn decode(text: &str, path: &Path) -> Result<KeyValues, TextFileError> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(TextFileError::MalformedLine {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: "expected key = value".to_string(),
                });
            };
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(KeyValues { pairs })
    }

    pub fn write(&self, path: &Path) -> Result<(), TextFileError> {
        write_atomic(path, self.encode().as_bytes()).map_err(|source| TextFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<KeyValues, TextFileError> {
        let text = fs::read_to_string(path).map_err(|source| TextFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        KeyValues::decode(&text, path)
    }
}

pub fn state_key_values(state: &AircraftState) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push_f64("pitch", state.pitch);
    kv.push_f64("x", state.x);
    kv.push_f64("y", state.y);
    kv.push_f64("z", state.z);
    kv
}

pub fn state_from_key_values(kv: &KeyValues, path: &Path) -> Result<AircraftState, TextFileError> {
    Ok(AircraftState::new(
        kv.require_f64("pitch", path)?,
        kv.require_f64("x", path)?,
        kv.require_f64("y", path)?,
        kv.require_f64("z", path)?,
    ))
}

pub fn write_state(path: &Path, state: &AircraftState) -> Result<(), TextFileError> {
    state_key_values(state).write(path)
}

pub fn read_state(path: &Path) -> Result<AircraftState, TextFileError> {
    let kv = KeyValues::read(path)?;
    state_from_key_values(&kv, path)
}
