//! Subcommand implementations.

pub mod analyze;
pub mod augment;
pub mod encode;
pub mod eval;
pub mod gen_masks;

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;

use maskbev_core::evaluation::ScoredMasks;
use maskbev_core::mask_gt::{read_mask_set, read_scored_mask_set, InstanceMaskSet};

/// Build the rayon pool for a command; 0 workers picks the default.
pub fn thread_pool(workers: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")
}

/// Load every `*.json` label set in a directory, keyed by its scan id.
pub fn read_mask_dir(dir: &Path) -> anyhow::Result<BTreeMap<String, InstanceMaskSet>> {
    let mut out = BTreeMap::new();
    for stem in crate::dataset::sorted_stems(dir, "json")? {
        let path = dir.join(format!("{stem}.json"));
        if path.file_name().and_then(|n| n.to_str()) == Some("manifest.json") {
            continue;
        }
        let set = read_mask_set(&path)?;
        if out.insert(set.scan_id.clone(), set).is_some() {
            anyhow::bail!("duplicate scan id in {}", path.display());
        }
    }
    Ok(out)
}

/// Load every scored prediction file in a directory, keyed by scan id.
pub fn read_pred_dir(dir: &Path) -> anyhow::Result<BTreeMap<String, ScoredMasks>> {
    let mut out = BTreeMap::new();
    for stem in crate::dataset::sorted_stems(dir, "json")? {
        let path = dir.join(format!("{stem}.json"));
        if path.file_name().and_then(|n| n.to_str()) == Some("manifest.json") {
            continue;
        }
        let (scan_id, masks) = read_scored_mask_set(&path)?;
        if out.insert(scan_id, masks).is_some() {
            anyhow::bail!("duplicate scan id in {}", path.display());
        }
    }
    Ok(out)
}
