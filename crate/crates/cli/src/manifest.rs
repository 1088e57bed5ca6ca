use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use spotdress::config::Config;

use crate::CliError;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_path: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub seed: Option<u64>,
    /// Arguments after the program name.
    pub args: Vec<String>,
    /// Configuration after overrides; reruns use it instead of the file.
    pub effective_config: Config,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Usage(format!("cannot encode manifest: {e}")))?;
        fs::write(path, text + "\n").map_err(|e| CliError::Core(e.into()))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Manifest path for a file output: `scores.csv` -> `scores.manifest.json`.
pub fn beside_file(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

pub const DIR_MANIFEST: &str = "manifest.json";
