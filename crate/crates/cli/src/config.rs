//! Config files and flag overrides. A flag beats the file, the file beats the
//! built-in default; the winner of each setting is logged to stderr.

use std::fmt::Debug;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::CliResult;

pub struct ConfigFile {
    path: Option<PathBuf>,
    raw: serde_json::Value,
}

impl ConfigFile {
    /// Reads `path` as `T`; fields absent from the file keep their defaults.
    pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<(T, Self)> {
        let Some(path) = path else {
            return Ok((T::default(), Self::none()));
        };
        let text = std::fs::read_to_string(path).map_err(echodiet::Error::Io)?;
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(echodiet::Error::Json)?;
        let value = T::deserialize(&raw).map_err(echodiet::Error::Json)?;
        Ok((
            value,
            Self {
                path: Some(path.to_path_buf()),
                raw,
            },
        ))
    }

    /// No file: every setting is a flag or a default.
    pub fn none() -> Self {
        Self { path: None, raw: serde_json::Value::Null }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn has(&self, pointer: &str) -> bool {
        self.raw.pointer(pointer).is_some()
    }
}

/// Effective settings of one command run, with where each came from.
pub struct SettingsLog {
    command: &'static str,
    lines: Vec<String>,
}

impl SettingsLog {
    pub fn new(command: &'static str, file: &ConfigFile) -> Self {
        let mut lines = Vec::new();
        if let Some(p) = file.path() {
            lines.push(format!("config file {}", p.display()));
        }
        Self { command, lines }
    }

    /// Applies `flag` to `slot` if given and records the outcome. `pointer`
    /// locates the setting inside the config file.
    pub fn apply<T: Debug>(&mut self, file: &ConfigFile, name: &str, pointer: &str, slot: &mut T, flag: Option<T>) {
        let source = match flag {
            Some(v) => {
                *slot = v;
                "flag"
            }
            None if file.has(pointer) => "file",
            None => "default",
        };
        self.lines.push(format!("{name} = {slot:?} ({source})"));
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn emit(&self) {
        for line in &self.lines {
            eprintln!("[{}] {line}", self.command);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use echodiet::dataset::WindowConfig;

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        std::fs::write(&p, r#"{"window_s": 3.0}"#).unwrap();
        let (mut w, file): (WindowConfig, _) = ConfigFile::load(Some(&p)).unwrap();
        assert_eq!(w.window_s, 3.0);
        let mut log = SettingsLog::new("t", &file);
        log.apply(&file, "window_s", "/window_s", &mut w.window_s, None);
        log.apply(&file, "n_bins", "/n_bins", &mut w.n_bins, Some(80));
        log.apply(&file, "overlap", "/overlap", &mut w.overlap, None);
        assert_eq!((w.window_s, w.n_bins, w.overlap), (3.0, 80, 0.5));
        assert_eq!(log.lines[1], "window_s = 3.0 (file)");
        assert_eq!(log.lines[2], "n_bins = 80 (flag)");
        assert_eq!(log.lines[3], "overlap = 0.5 (default)");
    }

    #[test]
    fn wrong_types_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        std::fs::write(&p, r#"{"window_s": "long"}"#).unwrap();
        assert!(ConfigFile::load::<WindowConfig>(Some(&p)).is_err());
    }
}
