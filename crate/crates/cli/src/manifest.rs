use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::{Global, Status};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self { path: path.to_path_buf(), sha256: wembed::digest_bytes(&bytes) })
    }
}

/// Provenance record written once into every output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub threads: Option<usize>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix: u64,
    pub wall_clock_s: f64,
    /// `complete` or `partial`.
    pub status: String,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Collects inputs and outputs for one command run.
pub struct Run {
    command: String,
    global: Global,
    started: Instant,
    started_unix: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl Run {
    pub fn start(command: &str, global: &Global) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            command: command.into(),
            global: global.clone(),
            started: Instant::now(),
            started_unix,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Resolve `--out` against the output root and create it.
    pub fn out_dir(&self, out: &Path) -> Result<PathBuf> {
        let dir = match &self.global.out_root {
            Some(root) if out.is_relative() => root.join(out),
            _ => out.to_path_buf(),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    pub fn finish(self, dir: &Path, config_digest: String, seeds: Vec<u64>, status: &Status) -> Result<PathBuf> {
        let digests = |paths: &[PathBuf]| paths.iter().map(FileDigest::of).collect::<Result<Vec<_>>>();
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            config_digest,
            seeds,
            threads: self.global.threads,
            inputs: digests(&self.inputs)?,
            outputs: digests(&self.outputs)?,
            started_unix: self.started_unix,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            status: match status {
                Status::Complete => "complete".into(),
                Status::Partial => "partial".into(),
            },
            notes: self.notes,
        };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}

/// Print the resolved configuration before any work starts.
pub fn print_config<T: Serialize>(command: &str, config: &T) -> Result<()> {
    println!("# {command} config");
    println!("{}", serde_json::to_string_pretty(config)?);
    Ok(())
}

pub fn digest_of<T: Serialize>(config: &T) -> Result<String> {
    Ok(wembed::digest_bytes(&serde_json::to_vec(config)?))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
