//! Output staging and manifests.
//!
//! Every command writes into a private staging directory and moves the
//! files into place only after all of them (and the manifest) exist, so a
//! failed or cancelled run leaves nothing behind.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "packbench-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Staging directories of runs in progress, for the interrupt handler.
static ACTIVE: Mutex<Vec<PathBuf>> = Mutex::new(Vec::new());

/// Removes every in-progress staging directory.
pub fn discard_active() {
    let dirs = std::mem::take(&mut *ACTIVE.lock().unwrap_or_else(|e| e.into_inner()));
    for d in dirs {
        let _ = std::fs::remove_dir_all(d);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: u32,
    pub tool: String,
    pub command: String,
    pub config: RunConfig,
    pub workers: usize,
    /// Single-worker runs are bit-reproducible; multi-worker runs only
    /// within stochastic tolerance.
    pub single_worker: bool,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub struct Artifacts {
    out: PathBuf,
    staging: PathBuf,
    created_out: bool,
    files: Vec<String>,
    inputs: Vec<FileDigest>,
    committed: bool,
}

impl Artifacts {
    pub fn begin(out: &Path) -> Result<Self, CliError> {
        let created_out = !out.exists();
        std::fs::create_dir_all(out)?;
        let staging = out.join(format!(".staging-{}", std::process::id()));
        if staging.exists() {
            std::fs::remove_dir_all(&staging)?;
        }
        std::fs::create_dir(&staging)?;
        ACTIVE.lock().unwrap_or_else(|e| e.into_inner()).push(staging.clone());
        Ok(Self { out: out.to_path_buf(), staging, created_out, files: Vec::new(), inputs: Vec::new(), committed: false })
    }

    /// Records an input file's digest for the manifest.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: file_digest(path)? });
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        if name == MANIFEST_FILE || self.files.iter().any(|f| f == name) {
            return Err(CliError::Runtime(format!("output `{name}` written twice")));
        }
        std::fs::write(self.staging.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest and moves every staged file into the output
    /// directory. Returns the final paths, manifest last.
    pub fn commit(mut self, config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
        let mut outputs = Vec::new();
        for name in &self.files {
            outputs.push(FileDigest { path: name.clone(), sha256: file_digest(&self.staging.join(name))? });
        }
        let workers = rayon::current_num_threads();
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA.into(),
            version: MANIFEST_VERSION,
            tool: format!("packbench {}", env!("CARGO_PKG_VERSION")),
            command: config.command.clone(),
            config: config.clone(),
            workers,
            single_worker: workers == 1,
            inputs: std::mem::take(&mut self.inputs),
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.staging.join(MANIFEST_FILE), text)?;
        self.files.push(MANIFEST_FILE.into());

        let mut paths = Vec::new();
        for name in &self.files {
            let dest = self.out.join(name);
            std::fs::rename(self.staging.join(name), &dest)?;
            paths.push(dest);
        }
        self.committed = true;
        Ok(paths)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        ACTIVE.lock().unwrap_or_else(|e| e.into_inner()).retain(|d| d != &self.staging);
        let _ = std::fs::remove_dir_all(&self.staging);
        if !self.committed && self.created_out {
            // Only succeeds if nothing else was put there.
            let _ = std::fs::remove_dir(&self.out);
        }
    }
}
