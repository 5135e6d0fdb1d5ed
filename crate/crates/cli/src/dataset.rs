//! Dataset directory conventions mirroring the public benchmarks.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

/// One SemanticKITTI sequence directory:
/// `root/sequences/<seq>/{velodyne/*.bin, labels/*.label, poses.txt, calib.txt}`.
#[derive(Debug, Clone)]
pub struct SemanticKittiSequence {
    pub scan_ids: Vec<String>,
    pub velodyne: Vec<PathBuf>,
    pub labels: Vec<PathBuf>,
    pub poses_path: PathBuf,
    pub calib_path: PathBuf,
}

pub fn discover_semantickitti(root: &Path, sequence: &str) -> anyhow::Result<SemanticKittiSequence> {
    let seq_dir = root.join("sequences").join(sequence);
    if !seq_dir.is_dir() {
        bail!("sequence directory {} does not exist", seq_dir.display());
    }
    let velodyne_dir = seq_dir.join("velodyne");
    let labels_dir = seq_dir.join("labels");
    let scan_ids = sorted_stems(&velodyne_dir, "bin")?;
    if scan_ids.is_empty() {
        bail!("no scans under {}", velodyne_dir.display());
    }
    let velodyne: Vec<PathBuf> = scan_ids
        .iter()
        .map(|id| velodyne_dir.join(format!("{id}.bin")))
        .collect();
    let labels: Vec<PathBuf> = scan_ids
        .iter()
        .map(|id| labels_dir.join(format!("{id}.label")))
        .collect();
    Ok(SemanticKittiSequence {
        scan_ids,
        velodyne,
        labels,
        poses_path: seq_dir.join("poses.txt"),
        calib_path: seq_dir.join("calib.txt"),
    })
}

/// One KITTI object scene: label and calibration (the scan itself is only
/// needed for overlays).
#[derive(Debug, Clone)]
pub struct KittiScene {
    pub scan_id: String,
    pub velodyne: Option<PathBuf>,
    pub label: PathBuf,
    pub calib: PathBuf,
}

pub fn discover_kitti(root: &Path) -> anyhow::Result<Vec<KittiScene>> {
    let label_dir = root.join("label_2");
    if !label_dir.is_dir() {
        bail!("label directory {} does not exist", label_dir.display());
    }
    let scan_ids = sorted_stems(&label_dir, "txt")?;
    if scan_ids.is_empty() {
        bail!("no labels under {}", label_dir.display());
    }
    Ok(scan_ids
        .into_iter()
        .map(|scan_id| {
            let velodyne = root.join("velodyne").join(format!("{scan_id}.bin"));
            KittiScene {
                velodyne: velodyne.is_file().then_some(velodyne),
                label: label_dir.join(format!("{scan_id}.txt")),
                calib: root.join("calib").join(format!("{scan_id}.txt")),
                scan_id,
            }
        })
        .collect())
}

/// Sorted file stems with the given extension.
pub fn sorted_stems(dir: &Path, extension: &str) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("listing directory {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(extension) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}
