//! Run manifests: the immutable record of what produced a run directory.
//! The run id is an FNV-1a hash of the command name plus the canonical
//! config, so identical work lands in the same directory on any machine.

use std::path::Path;

use rdprobe_core::{Error, Result};
use serde_json::{Map, Value};

use crate::config::ConfigTree;

pub const MANIFEST_FILE: &str = "manifest.json";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// 16-hex-digit id for one unit of work. The seed lives inside the canonical
/// config, so the id is a pure function of (command, config, seed).
pub fn run_id_for(command: &str, cfg: &ConfigTree) -> String {
    let content = format!("{command}\n{}", cfg.canonical_json());
    format!("{:016x}", fnv1a64(content.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    AbortedNan,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::AbortedNan => "aborted-nan",
            RunStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Result<RunStatus> {
        match s {
            "completed" => Ok(RunStatus::Completed),
            "aborted-nan" => Ok(RunStatus::AbortedNan),
            "failed" => Ok(RunStatus::Failed),
            _ => Err(Error::InvalidArg(format!("unknown run status {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub run_id: String,
    /// Subcommand that produced the directory, e.g. "train" or "baseline-pca".
    pub command: String,
    pub seed: u64,
    /// Label classes in the dataset; lets the report derive H_Y without
    /// touching the data files.
    pub classes: usize,
    pub version: String,
    pub status: RunStatus,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: Value,
}

impl RunManifest {
    pub fn new(
        run_id: &str,
        command: &str,
        cfg: &ConfigTree,
        classes: usize,
        status: RunStatus,
        started_unix: u64,
        finished_unix: u64,
    ) -> Result<RunManifest> {
        let config: Value = serde_json::from_str(&cfg.canonical_json())
            .map_err(|e| Error::InvalidArg(format!("canonical config did not round-trip: {e}")))?;
        Ok(RunManifest {
            run_id: run_id.to_string(),
            command: command.to_string(),
            seed: cfg.train.seed,
            classes,
            version: env!("CARGO_PKG_VERSION").to_string(),
            status,
            started_unix,
            finished_unix,
            config,
        })
    }

    pub fn to_json(&self) -> String {
        let mut m = Map::new();
        m.insert("run_id".into(), self.run_id.clone().into());
        m.insert("command".into(), self.command.clone().into());
        m.insert("seed".into(), self.seed.into());
        m.insert("classes".into(), self.classes.into());
        m.insert("version".into(), self.version.clone().into());
        m.insert("status".into(), self.status.as_str().into());
        m.insert("started_unix".into(), self.started_unix.into());
        m.insert("finished_unix".into(), self.finished_unix.into());
        m.insert("config".into(), self.config.clone());
        serde_json::to_string_pretty(&Value::Object(m)).expect("manifest serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<RunManifest> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::parse(origin, "manifest must be a JSON object"))?;
        let field = |key: &str| -> Result<&Value> {
            obj.get(key).ok_or_else(|| Error::parse(origin, format!("manifest missing {key:?}")))
        };
        let text_field = |key: &str| -> Result<String> {
            field(key)?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::parse(origin, format!("manifest {key:?} must be a string")))
        };
        let uint_field = |key: &str| -> Result<u64> {
            field(key)?
                .as_u64()
                .ok_or_else(|| Error::parse(origin, format!("manifest {key:?} must be an integer")))
        };
        Ok(RunManifest {
            run_id: text_field("run_id")?,
            command: text_field("command")?,
            seed: uint_field("seed")?,
            classes: uint_field("classes")? as usize,
            version: text_field("version")?,
            status: RunStatus::parse(&text_field("status")?)
                .map_err(|e| Error::parse(origin, e.to_string()))?,
            started_unix: uint_field("started_unix")?,
            finished_unix: uint_field("finished_unix")?,
            config: field("config")?.clone(),
        })
    }

    /// Write the manifest into `dir`; refuses to replace an existing one
    /// (callers clear the directory first when forcing a rerun).
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            return Err(Error::InvalidArg(format!(
                "manifest already exists at {}; manifests are immutable",
                path.display()
            )));
        }
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))
    }

    /// Read the manifest in `dir` if one exists.
    pub fn read(dir: &Path) -> Result<Option<RunManifest>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(Self::from_json(&text, &path)?))
    }
}

/// Seconds since the UNIX epoch; manifests record wall-clock bookkeeping
/// only, no derived quantity depends on it.
pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
