//! The output directory and the run manifest written into it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    /// Relative to the output directory; each one exists when status is ok.
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub toolkit_version: String,
}

/// All writes of a command go through here, so nothing lands outside
/// `root` and every written file is recorded.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    outputs: Vec<String>,
    created: bool,
}

impl OutDir {
    pub fn new(root: PathBuf) -> Self {
        Self {
            root,
            outputs: Vec::new(),
            created: false,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&mut self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| CliError::io(&self.root, e))?;
        self.created = true;
        Ok(())
    }

    /// Path for `name` under the root, recorded as an output.
    pub fn claim(&mut self, name: &str) -> Result<PathBuf> {
        if !self.created {
            self.create()?;
        }
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(self.root.join(name))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.claim(name)?;
        fs::write(&path, bytes).map_err(|e| CliError::io(path, e))
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn was_created(&self) -> bool {
        self.created
    }
}

/// What a command hands back for its manifest.
#[derive(Clone, Debug, Default)]
pub struct RunRecord {
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
}

pub struct ManifestWriter {
    command: String,
    started: Instant,
}

impl ManifestWriter {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: Instant::now(),
        }
    }

    pub fn finish(self, out: &OutDir, record: RunRecord, error: Option<&CliError>) -> RunManifest {
        RunManifest {
            command: self.command,
            status: if error.is_some() {
                Status::Failed
            } else {
                Status::Ok
            },
            error: error.map(|e| e.to_string()),
            config: record.config,
            seeds: record.seeds,
            inputs: record.inputs,
            outputs: out.outputs().to_vec(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Write to a temporary sibling, then rename over the final name.
pub fn write_atomic(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let fin = dir.join(MANIFEST_FILE);
    let tmp = dir.join(format!(".{MANIFEST_FILE}.tmp"));
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, &fin).map_err(|e| CliError::io(&fin, e))?;
    Ok(fin)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}
