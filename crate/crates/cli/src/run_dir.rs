use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;

/// An input artifact that feeds the run-directory hash.
pub struct Input {
    pub role: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Serialize)]
struct InputDigest<'a> {
    role: &'a str,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_sha256: String,
    inputs: Vec<InputDigest<'a>>,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads an upstream artifact; a missing file maps to the missing-artifact exit code.
pub fn read_artifact(path: &Path, what: &'static str) -> Result<Vec<u8>, CliError> {
    if !path.exists() {
        return Err(CliError::missing_file(what, path));
    }
    Ok(fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates `<out>/<command>-seed<seed>-<hash>` and writes `config.json` and `manifest.json`.
    pub fn create(out: &Path, command: &str, config: &Config, inputs: &[Input]) -> anyhow::Result<Self> {
        let config_json = config.to_json();
        let digests: Vec<InputDigest> = inputs.iter().map(|i| InputDigest { role: i.role, sha256: sha256(&i.bytes) }).collect();
        let manifest = Manifest { command, seed: config.seed(), config_sha256: sha256(config_json.as_bytes()), inputs: digests };
        let manifest_json = serde_json::to_string_pretty(&manifest)? + "\n";
        let hash = sha256(manifest_json.as_bytes());
        let path = out.join(format!("{command}-seed{}-{}", config.seed(), &hash[..12]));
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let dir = Self { path };
        dir.write("config.json", config_json.as_bytes())?;
        dir.write("manifest.json", manifest_json.as_bytes())?;
        Ok(dir)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let p = self.file(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        self.write(name, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> anyhow::Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        self.write(name, &w.into_inner()?)
    }

    pub fn write_table(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        self.write(name, &w.into_inner()?)
    }
}
