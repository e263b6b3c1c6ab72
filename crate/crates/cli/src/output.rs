use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: u32 = 1;

/// Writes CSV and JSON artifacts into one run directory, tagging each with
/// the config hash and recording its digest.
pub struct RunWriter {
    dir: PathBuf,
    hash: String,
    files: Vec<FileEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    config_hash: &'a str,
    command: &'a str,
    result: &'a T,
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub schema: u32,
    pub config_hash: &'a str,
    pub commands: Vec<String>,
    pub katolab_version: &'a str,
    pub cli_version: &'a str,
    pub seed: u64,
    pub tolerance_profile: &'a str,
    pub jobs: usize,
    pub wall_time_seconds: f64,
    pub files: &'a [FileEntry],
}

impl RunWriter {
    pub fn new(dir: &Path, hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn store(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, command: &str, result: &T) -> Result<()> {
        let tagged = Tagged {
            config_hash: &self.hash,
            command,
            result,
        };
        let mut bytes = serde_json::to_vec_pretty(&tagged)?;
        bytes.push(b'\n');
        self.store(name, &bytes)
    }

    /// `config_hash` is prepended to the header and to every row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(std::iter::once("config_hash").chain(header.iter().copied()))?;
        for row in rows {
            w.write_record(std::iter::once(self.hash.as_str()).chain(row.iter().map(String::as_str)))?;
        }
        let bytes = w.into_inner().context("flushing csv")?;
        self.store(name, &bytes)
    }

    pub fn finish(
        mut self,
        commands: Vec<String>,
        seed: u64,
        profile: &str,
        jobs: usize,
        wall: Duration,
    ) -> Result<PathBuf> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA,
            config_hash: &self.hash,
            commands,
            katolab_version: katolab::VERSION,
            cli_version: env!("CARGO_PKG_VERSION"),
            seed,
            tolerance_profile: profile,
            jobs,
            wall_time_seconds: wall.as_secs_f64(),
            files: &self.files,
        };
        let path = self.dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
