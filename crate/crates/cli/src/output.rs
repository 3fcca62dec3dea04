//! Atomic file output, digests and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use ahpa_core::{EngineError, Result};

fn io_error(path: &Path, e: std::io::Error) -> EngineError {
    EngineError::io_failure(format!("{}: {e}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Write `bytes` to a temporary sibling of `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| EngineError::io_failure(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(io_error(path, e));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub tool_version: String,
    pub duration_ms: u128,
    pub outputs: Vec<FileEntry>,
}

/// Collects the files a command reads and writes, then writes the manifest.
pub struct Run {
    command: &'static str,
    started: Instant,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

impl Run {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileEntry {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        log::info!("wrote {}", path.display());
        self.outputs.push(FileEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Write the manifest to `path` unless nothing was written.
    pub fn finish(self, path: &Path, config: &impl Serialize) -> Result<()> {
        if self.outputs.is_empty() {
            return Ok(());
        }
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: std::env::args().skip(1).collect(),
            config: serde_json::to_value(config).map_err(|e| EngineError::io_failure(e.to_string()))?,
            inputs: self.inputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_ms: self.started.elapsed().as_millis(),
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| EngineError::io_failure(e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

/// Manifest location for a single output file: `<file>.manifest.json`.
pub fn manifest_for_file(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
