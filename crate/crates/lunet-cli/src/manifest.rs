use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::args::Command;

pub const RUN_MANIFEST: &str = "run.json";

/// Record of one invocation, enough to run it again.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config_file: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Every flag of the command with defaults filled in.
    pub resolved: Command,
    /// Library-level settings derived from the flags, where there are any.
    pub settings: serde_json::Value,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub artifacts: Vec<PathBuf>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(resolved: Command, argv: Vec<String>, config_file: Option<PathBuf>, settings: serde_json::Value) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: resolved.name().to_string(),
            argv,
            config_file,
            seed: resolved.seed(),
            resolved,
            settings,
            started_unix: unix_now(),
            finished_unix: None,
            artifacts: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RUN_MANIFEST);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| lunet::Error::InvalidConfig(format!("{}: {e}", path.display())).into())
    }
}
