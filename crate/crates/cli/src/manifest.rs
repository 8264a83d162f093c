//! Machine-readable run manifest, one record per subcommand.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sphx_core::PipelineConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub parameters: BTreeMap<String, String>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub level_sizes: Vec<usize>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            parameters: config.to_key_values().into_map(),
            ..Self::default()
        }
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.to_string(), value.to_string());
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub runs: BTreeMap<String, RunRecord>,
}

impl Manifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("bad manifest {}: {e}", path.display())))
    }

    /// Replaces the record of `command` in the manifest at `path`, creating
    /// the file when needed.
    pub fn record(path: &Path, command: &str, record: RunRecord) -> CliResult<()> {
        let mut manifest = if path.exists() {
            Self::read(path)?
        } else {
            Self::default()
        };
        manifest.runs.insert(command.to_string(), record);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}
