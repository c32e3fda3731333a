//! Output directory handling: atomic file writes and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: format!("{}: {e}", path.display()) }
}

/// Reads an input file, failing with the configuration exit code when it is
/// missing.
pub fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

#[derive(Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

/// Collects outputs of one run and writes them, then `manifest.json`.
pub struct Run {
    dir: PathBuf,
    subcommand: &'static str,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    started: SystemTime,
    clock: Instant,
}

impl Run {
    pub fn start<C: Serialize>(dir: &Path, subcommand: &'static str, config: &C, seed: Option<u64>) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            subcommand,
            config: serde_json::to_value(config).map_err(|e| Failure::config(e.to_string()))?,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    /// Records an input file by path and content hash.
    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileRecord { path: path.display().to_string(), sha256: sha256_hex(bytes) });
    }

    /// Writes `name` through a temporary file in the output directory and a
    /// rename, so readers never see a partial file.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let target = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| io_failure(&self.dir, e))?;
        tmp.write_all(bytes).map_err(|e| io_failure(&target, e))?;
        tmp.as_file().sync_all().map_err(|e| io_failure(&target, e))?;
        tmp.persist(&target).map_err(|e| io_failure(&target, e))?;
        self.outputs.push(FileRecord { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Serializes with a CSV writer function from the core crate.
    pub fn write_csv<F>(&mut self, name: &str, f: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut Vec<u8>) -> pal_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure { code: 4, message: e.to_string() })?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `manifest.json`. Everything except `wall_clock` is a function of
    /// the configuration, inputs and seed.
    pub fn finish(mut self) -> Result<(), Failure> {
        let config_text = serde_json::to_string(&json!({
            "subcommand": self.subcommand,
            "config": self.config,
            "inputs": self.inputs,
        }))
        .expect("serializable");
        let started = self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "tool": "pal",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "config": self.config,
            "config_sha256": sha256_hex(config_text.as_bytes()),
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_clock": {
                "started_unix_secs": started,
                "elapsed_secs": self.clock.elapsed().as_secs_f64(),
            },
        });
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("serializable");
        bytes.push(b'\n');
        self.write("manifest.json", &bytes)
    }
}
