//! Run manifests: everything needed to reproduce a run's outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub label: String,
    pub stream_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub seed: u64,
    /// How stream ids are assigned, plus the individual streams used.
    pub scheme: String,
    pub streams: Vec<StreamRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Seeds,
    /// Sampling and discretization choices that are not config fields.
    pub notes: Vec<String>,
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<OutputRecord>,
    #[serde(default)]
    pub checks: Vec<CheckRecord>,
    pub config: ExperimentConfig,
}

pub const STREAM_SCHEME: &str = "stream_id = (block << 32) | replica; block = index into the gamma1 grid";

/// Collects outputs, timings and seeds while a command runs and writes the
/// manifest at the end. All files are written by this single writer.
#[derive(Debug)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    command: String,
    started: Instant,
    started_unix: f64,
    stages: Vec<StageTiming>,
    outputs: Vec<OutputRecord>,
    streams: Vec<StreamRecord>,
    notes: Vec<String>,
    checks: Vec<CheckRecord>,
}

impl RunContext {
    pub fn new(command: &str, config: ExperimentConfig, out_dir: PathBuf) -> CliResult<Self> {
        config.validate()?;
        fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Ok(Self {
            config,
            out_dir,
            command: command.into(),
            started: Instant::now(),
            started_unix,
            stages: Vec::new(),
            outputs: Vec::new(),
            streams: Vec::new(),
            notes: Vec::new(),
            checks: Vec::new(),
        })
    }

    /// Runs `f` and records its wall-clock time under `name`.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let t0 = Instant::now();
        let out = f(self)?;
        self.stages.push(StageTiming {
            name: name.into(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    pub fn stream(&mut self, label: impl Into<String>, stream_id: u64) {
        self.streams.push(StreamRecord {
            label: label.into(),
            stream_id,
        });
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn check(&mut self, record: CheckRecord) {
        self.checks.push(record);
    }

    pub fn checks(&self) -> &[CheckRecord] {
        &self.checks
    }

    /// Writes `name` in the output directory from a buffer filled by `fill`.
    pub fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        let path = self.out_dir.join(name);
        fill(&mut buf).map_err(|e| CliError::io(&path, e))?;
        fs::write(&path, &buf).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(OutputRecord {
            path: name.into(),
            sha256: hex::encode(Sha256::digest(&buf)),
            bytes: buf.len() as u64,
        });
        Ok(path)
    }

    pub fn outputs(&self) -> &[OutputRecord] {
        &self.outputs
    }

    pub fn finish(self) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            tool: "burstpdmp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_hash: self.config.hash()?,
            seeds: Seeds {
                seed: self.config.seed,
                scheme: STREAM_SCHEME.into(),
                streams: self.streams,
            },
            notes: self.notes,
            started_unix_seconds: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            stages: self.stages,
            outputs: self.outputs,
            checks: self.checks,
            config: self.config,
        };
        let path = self.out_dir.join(MANIFEST_FILE);
        let mut file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::to_writer_pretty(&mut file, &manifest)
            .map_err(|e| CliError::io(&path, std::io::Error::other(e)))?;
        writeln!(file).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

/// Reads a manifest back.
pub fn read_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config("manifest", e.to_string()))
}
