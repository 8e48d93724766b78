//! Atomic output files and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use gdm_core::{Error, Result};

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
pub struct OutputDigest {
    pub role: String,
    pub path: Option<String>,
    pub sha256: String,
}

/// Everything needed to reproduce a run. The thread count is left out on
/// purpose: it never changes the results.
#[derive(Serialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub parameters: Value,
    pub tool_version: String,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, seed: Option<u64>, parameters: Value) -> Result<Self> {
        let config_sha256 = match config {
            Some(p) => Some(sha256_hex(&std::fs::read(p).map_err(|e| io_error(p, e))?)),
            None => None,
        };
        Ok(RunManifest {
            schema: 1,
            command: command.into(),
            config_path: config.map(|p| p.display().to_string()),
            config_sha256,
            seed,
            parameters,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
        })
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

/// Collects the outputs of a command and writes them only once all of them
/// are ready, so a failing run leaves no partial files.
pub struct Output {
    manifest_path: Option<PathBuf>,
    manifest: RunManifest,
    files: Vec<(Option<PathBuf>, Vec<u8>)>,
}

impl Output {
    pub fn new(manifest_path: Option<PathBuf>, manifest: RunManifest) -> Self {
        Output { manifest_path, manifest, files: Vec::new() }
    }

    pub fn main(self, path: Option<PathBuf>, bytes: Vec<u8>) -> Self {
        self.extra(path, bytes, "main")
    }

    /// `None` as path means stdout.
    pub fn extra(mut self, path: Option<PathBuf>, bytes: Vec<u8>, role: &str) -> Self {
        self.manifest.outputs.push(OutputDigest {
            role: role.into(),
            path: path.as_ref().map(|p| p.display().to_string()),
            sha256: sha256_hex(&bytes),
        });
        self.files.push((path, bytes));
        self
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(p) = self.manifest_path.take() {
            let mut bytes = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
            bytes.push(b'\n');
            self.files.push((Some(p), bytes));
        }
        for (path, bytes) in &self.files {
            match path {
                Some(p) => write_atomic(p, bytes)?,
                None => std::io::stdout()
                    .write_all(bytes)
                    .map_err(|e| Error::Config(format!("stdout: {e}")))?,
            }
        }
        Ok(())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}
