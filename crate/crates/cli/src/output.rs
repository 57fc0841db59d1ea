//! Output directory bookkeeping: every written file is hashed into the run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub seed: u64,
    pub version: &'static str,
    pub workers: usize,
    pub timings: Vec<Timing>,
    pub outputs: Vec<OutputFile>,
}

pub struct OutDir {
    root: PathBuf,
    manifest: RunManifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl OutDir {
    /// Creates `root`; the seed is fixed here, before any sampling.
    pub fn create(root: &Path, command: &str, config: Option<&Path>, seed: u64, workers: usize) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                config: config.map(|p| p.display().to_string()),
                seed,
                version: env!("CARGO_PKG_VERSION"),
                workers,
                timings: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.root.join(name), bytes)?;
        self.manifest.outputs.retain(|f| f.path != name);
        self.manifest.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        buf.push(b'\n');
        self.write(name, &buf)
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.manifest.timings.push(Timing {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn finish(self) -> io::Result<()> {
        let mut buf = serde_json::to_vec_pretty(&self.manifest).map_err(io::Error::other)?;
        buf.push(b'\n');
        fs::write(self.root.join("manifest.json"), buf)
    }
}
