//! Run manifests: which stage ran, under which config hash and seed, and
//! what it produced. No timestamps or host details, so manifests are as
//! reproducible as the artifacts they describe.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    /// The subcommand that produced this manifest (e.g. "gen-data").
    pub command: String,
    pub master_seed: u64,
    pub config_hash: String,
    /// Crate versions of the components involved, keyed by crate name.
    pub versions: BTreeMap<String, String>,
    /// Artifact paths relative to the run directory, sorted.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config_hash: String, mut artifacts: Vec<String>) -> Self {
        artifacts.sort();
        let mut versions = BTreeMap::new();
        versions.insert("vantage-core".to_string(), vantage_core::VERSION.to_string());
        versions.insert("vantage-learn".to_string(), vantage_learn::VERSION.to_string());
        versions.insert("vantage-policy".to_string(), vantage_policy::VERSION.to_string());
        versions.insert("vantage-harness".to_string(), env!("CARGO_PKG_VERSION").to_string());
        RunManifest {
            command: command.to_string(),
            master_seed,
            config_hash,
            versions,
            artifacts,
        }
    }

    pub fn path(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("manifest-{command}.json"))
    }

    /// Write `manifest-<command>.json` under the run directory.
    pub fn save(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir)?;
        let path = Self::path(out_dir, &self.command);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Generation(format!("serializing manifest: {e}")))?;
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }

    pub fn load(out_dir: &Path, command: &str) -> Result<Self> {
        let text = std::fs::read_to_string(Self::path(out_dir, command))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifests_sort_artifacts_and_roundtrip_deterministically() {
        let m = RunManifest::new(
            "gen-data",
            9,
            "aabbccdd00112233".into(),
            vec!["data/train/train-1.bin".into(), "data/train/train-0.bin".into()],
        );
        assert_eq!(m.artifacts, vec!["data/train/train-0.bin", "data/train/train-1.bin"]);
        assert!(m.versions.contains_key("vantage-core"));

        let dir = tempfile::tempdir().unwrap();
        let path = m.save(dir.path()).unwrap();
        assert_eq!(path, dir.path().join("manifest-gen-data.json"));
        let loaded = RunManifest::load(dir.path(), "gen-data").unwrap();
        assert_eq!(loaded, m);

        // Byte-identical on rewrite.
        let first = std::fs::read(&path).unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}
