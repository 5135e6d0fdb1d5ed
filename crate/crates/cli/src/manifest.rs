//! Run manifests: what a batch command consumed and produced.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            use std::fmt::Write;
            write!(s, "{b:02x}").expect("write to string");
            s
        })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanStatus {
    pub scan_id: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ScanStatus {
    pub fn ok(scan_id: impl Into<String>) -> Self {
        Self {
            scan_id: scan_id.into(),
            status: "ok".into(),
            message: None,
        }
    }

    pub fn failed(scan_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            scan_id: scan_id.into(),
            status: "error".into(),
            message: Some(message.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_hash: String,
    /// sha256 per consumed input file, keyed by path.
    pub input_checksums: BTreeMap<String, String>,
    pub scans: Vec<ScanStatus>,
    pub wall_time_secs: f64,
}

pub struct ManifestBuilder {
    config_hash: String,
    input_checksums: BTreeMap<String, String>,
    scans: Vec<ScanStatus>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(config_hash: String) -> Self {
        Self {
            config_hash,
            input_checksums: BTreeMap::new(),
            scans: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn checksum_input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("checksumming input {}", path.display()))?;
        self.input_checksums
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn extend(&mut self, statuses: impl IntoIterator<Item = ScanStatus>) {
        self.scans.extend(statuses);
    }

    pub fn failure_count(&self) -> usize {
        self.scans.iter().filter(|s| !s.is_ok()).count()
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash,
            input_checksums: self.input_checksums,
            scans: self.scans,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scan_appears_once_and_failures_count() {
        let mut b = ManifestBuilder::new("abc".into());
        b.extend([
            ScanStatus::ok("000000"),
            ScanStatus::failed("000001", "missing label"),
        ]);
        assert_eq!(b.failure_count(), 1);
        let manifest = b.finish();
        assert_eq!(manifest.scans.len(), 2);
        assert_eq!(manifest.scans[1].message.as_deref(), Some("missing label"));
    }

    #[test]
    fn manifest_roundtrips_as_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let manifest = ManifestBuilder::new("h".into()).finish();
        write_manifest(&path, &manifest).unwrap();
        let back: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.config_hash, "h");
        assert_eq!(back.toolkit_version, env!("CARGO_PKG_VERSION"));
    }
}
