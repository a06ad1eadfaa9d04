//! `manifest.json`: what a command read, what it wrote, and content hashes.

use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn hash(path: &Path, shown_as: String) -> io::Result<Self> {
        let mut hasher = Sha256::new();
        let bytes = io::copy(&mut File::open(path)?, &mut hasher)?;
        let sha256 = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self {
            path: shown_as,
            bytes,
            sha256,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

/// Collects the outputs of one command under `dir`.
pub struct Outputs {
    pub dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(echodiet::Error::Io)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Path for output `name` (relative to the output directory), recorded
    /// for the manifest. Parent directories are created.
    pub fn file(&mut self, name: &str) -> CliResult<PathBuf> {
        let rel = PathBuf::from(name);
        let full = self.dir.join(&rel);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent).map_err(echodiet::Error::Io)?;
        }
        self.files.push(rel);
        Ok(full)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let path = self.file(name)?;
        let mut text = serde_json::to_string_pretty(value).map_err(echodiet::Error::Json)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(echodiet::Error::Io)?;
        Ok(path)
    }

    /// Hashes everything written so far and writes `manifest.json`. Returns
    /// the output entries.
    pub fn finish(
        self,
        command: &'static str,
        parameters: serde_json::Value,
        inputs: &[PathBuf],
    ) -> CliResult<Vec<FileEntry>> {
        let inputs = inputs
            .iter()
            .map(|p| FileEntry::hash(p, p.display().to_string()))
            .collect::<io::Result<Vec<_>>>()
            .map_err(echodiet::Error::Io)?;
        let mut files = self.files;
        files.sort();
        files.dedup();
        let outputs = files
            .iter()
            .map(|rel| FileEntry::hash(&self.dir.join(rel), rel.to_string_lossy().replace('\\', "/")))
            .collect::<io::Result<Vec<_>>>()
            .map_err(echodiet::Error::Io)?;
        let manifest = Manifest {
            tool: "echodiet",
            version: env!("CARGO_PKG_VERSION"),
            command,
            parameters,
            inputs,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(echodiet::Error::Json)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text).map_err(echodiet::Error::Io)?;
        Ok(manifest.outputs)
    }
}
