use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};
use crate::scenario::Scenario;

pub const MANIFEST_FILE: &str = "manifest.json";

/// What was run, with which defaults, by which build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_hash: String,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Unix seconds; `SOURCE_DATE_EPOCH` wins over the wall clock.
    pub created: u64,
    pub effective: serde_json::Value,
    pub defaults_applied: Vec<String>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(scenario: &Scenario, command: &str, warnings: Vec<String>) -> Self {
        Self {
            scenario_hash: scenario.hash(),
            tool: "qlab".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created: timestamp(),
            effective: serde_json::to_value(scenario).expect("scenario serializes"),
            defaults_applied: scenario.defaults_applied.clone(),
            warnings,
            artifacts: Vec::new(),
        }
    }

    /// `manifest=<hash>`, the tag embedded in every artifact.
    pub fn tag(&self) -> String {
        format!("manifest={}", self.scenario_hash)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            file: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return v;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Extract the hash from a `manifest=<hash>` comment.
pub fn hash_from_comments(comments: &[String]) -> Option<String> {
    comments
        .iter()
        .find_map(|c| c.strip_prefix("manifest=").map(|h| h.trim().to_string()))
}

/// Whole-file write: temp file in the target directory, then rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let target = dir.join(name);
    let ctx = || format!("writing {}", target.display());
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(ctx(), e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(ctx(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(ctx(), e))?;
    tmp.persist(&target).map_err(|e| CliError::io(ctx(), e.error))?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", b"first version, longer").unwrap();
        let p = write_atomic(dir.path(), "a.txt", b"second").unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn comment_hash() {
        let c = vec!["other".to_string(), "manifest=abc123".to_string()];
        assert_eq!(hash_from_comments(&c).as_deref(), Some("abc123"));
        assert_eq!(hash_from_comments(&[]), None);
    }
}
