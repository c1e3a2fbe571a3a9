//! Per-directory run manifests: what produced the directory, from which inputs, and how
//! far each stage got.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::error::{LabError, Result};
use crate::store_io::write_json_atomic;

pub const RUN_MANIFEST_SCHEMA: &str = "runmanifest/1";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    Running,
    Ok,
    Failed,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub status: StageState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    /// SHA-256 of the canonical JSON of the settings this directory depends on.
    pub config_hash: String,
    /// Tree hash over the input artifacts (see [`inputs_hash`]).
    pub inputs_hash: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub stages: BTreeMap<String, StageStatus>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(stage: &str, config_hash: String, inputs_hash: String) -> Self {
        let mut stages = BTreeMap::new();
        stages.insert(
            stage.to_string(),
            StageStatus {
                status: StageState::Running,
                message: None,
            },
        );
        Self {
            schema: RUN_MANIFEST_SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            inputs_hash,
            started_unix: now_unix(),
            finished_unix: None,
            stages,
        }
    }

    pub fn finish(&mut self, stage: &str, status: StageState, message: Option<String>) {
        self.stages.insert(stage.to_string(), StageStatus { status, message });
        self.finished_unix = Some(now_unix());
    }

    pub fn is_complete(&self) -> bool {
        !self.stages.is_empty() && self.stages.values().all(|s| s.status == StageState::Ok)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        Ok(write_json_atomic(&dir.join(RUN_MANIFEST_FILE), self)?)
    }

    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(RUN_MANIFEST_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| LabError::Config(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LabError::io(format!("reading {}", path.display()), e)),
        }
    }
}

/// Makes `dir` ready for a fresh run.
///
/// A directory whose manifest reports a completed run is left alone unless `force` is set;
/// an incomplete or failed run is replaced.
pub fn prepare_run_dir(dir: &Path, config_hash: &str, force: bool) -> Result<()> {
    if let Some(existing) = RunManifest::read(dir)? {
        if existing.is_complete() && !force {
            let reason = if existing.config_hash == config_hash {
                "it already holds a completed run of this configuration".to_string()
            } else {
                format!(
                    "it holds a completed run of a different configuration ({})",
                    existing.config_hash
                )
            };
            return Err(LabError::Refused {
                path: dir.to_path_buf(),
                reason,
            });
        }
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| LabError::io(format!("clearing {}", dir.display()), e))?;
    }
    fs::create_dir_all(dir).map_err(|e| LabError::io(format!("creating {}", dir.display()), e))
}

/// Git-style content hash over a set of files: each file is hashed as
/// `sha256("blob <len>\0" ++ bytes)`, then the list of `<hash> <name>` lines, sorted by
/// name, is hashed again.
pub fn inputs_hash(files: &[(String, PathBuf)]) -> Result<String> {
    let mut lines: Vec<(String, String)> = Vec::with_capacity(files.len());
    for (name, path) in files {
        let bytes = fs::read(path).map_err(|e| LabError::io(format!("hashing {}", path.display()), e))?;
        let mut blob = format!("blob {}\0", bytes.len()).into_bytes();
        blob.extend_from_slice(&bytes);
        lines.push((name.clone(), sha256_hex(&blob)));
    }
    lines.sort();
    let tree: String = lines.iter().map(|(n, h)| format!("{h} {n}\n")).collect();
    Ok(sha256_hex(tree.as_bytes()))
}
