//! Mask label files: JSON with run-length encoded rasters.
//!
//! One document per scan:
//!
//! ```json
//! {"scan_id": "000123",
//!  "grid": {"x_min": 0.0, "x_max": 80.0, "y_min": -40.0, "y_max": 40.0,
//!           "voxel_size": 0.16, "H": 500, "W": 500},
//!  "instances": [{"id": 3, "class": 0, "rle": [120, 4, 496, 4, ...]}]}
//! ```
//!
//! `rle` holds uncompressed run lengths over the row-major flattened mask,
//! starting with the count of 0s (possibly zero), alternating 0-runs and
//! 1-runs, and summing to H·W. Prediction files use the same schema with an
//! additional per-instance `score` in [0, 1].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset_io::DEFAULT_Z_RANGE;
use crate::error::{Error, Result};
use crate::pillar_encoder::{GridConfig, DEFAULT_MAX_POINTS_PER_VOXEL};

use super::{BinaryMask, InstanceMaskSet, MaskEntry};

/// Encode a mask as alternating 0-run/1-run lengths, starting with zeros.
pub fn rle_encode(mask: &BinaryMask) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &v in mask.raster() {
        if v == current {
            run += 1;
        } else {
            counts.push(run);
            current = v;
            run = 1;
        }
    }
    counts.push(run);
    if mask.raster().is_empty() {
        // degenerate 0-cell raster: a single empty zero-run
        return vec![0];
    }
    counts
}

/// Decode run-length counts produced by [`rle_encode`] onto `grid`.
pub fn rle_decode(counts: &[u32], grid: GridConfig) -> Result<BinaryMask> {
    let total: u64 = counts.iter().map(|c| *c as u64).sum();
    if total != grid.cell_count() as u64 {
        return Err(Error::Invalid(format!(
            "rle counts sum to {total}, raster has {} cells",
            grid.cell_count()
        )));
    }
    let mut data = Vec::with_capacity(grid.cell_count());
    let mut value = false;
    for &c in counts {
        data.extend(std::iter::repeat_n(value, c as usize));
        value = !value;
    }
    BinaryMask::from_raster(data, grid)
}

#[derive(Serialize, Deserialize)]
struct GridJson {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    voxel_size: f64,
    #[serde(rename = "H")]
    h: u32,
    #[serde(rename = "W")]
    w: u32,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    id: u32,
    class: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    rle: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct MaskFileJson {
    scan_id: String,
    grid: GridJson,
    instances: Vec<InstanceJson>,
}

fn grid_to_json(grid: &GridConfig) -> GridJson {
    GridJson {
        x_min: grid.x_min,
        x_max: grid.x_max,
        y_min: grid.y_min,
        y_max: grid.y_max,
        voxel_size: grid.voxel_size,
        h: grid.height() as u32,
        w: grid.width() as u32,
    }
}

fn grid_from_json(g: &GridJson, path: &Path) -> Result<GridConfig> {
    // the file stores only the raster geometry; z range and sampling limit
    // take the toolkit defaults
    let grid = GridConfig::new(
        g.x_min,
        g.x_max,
        g.y_min,
        g.y_max,
        DEFAULT_Z_RANGE.0,
        DEFAULT_Z_RANGE.1,
        g.voxel_size,
        DEFAULT_MAX_POINTS_PER_VOXEL,
    )
    .map_err(|e| Error::format(path, format!("bad grid block: {e}")))?;
    if grid.height() != g.h as usize || grid.width() != g.w as usize {
        return Err(Error::format(
            path,
            format!(
                "stored dims {}×{} differ from bounds-derived {}×{}",
                g.h,
                g.w,
                grid.height(),
                grid.width()
            ),
        ));
    }
    Ok(grid)
}

/// Write a ground-truth label set.
pub fn write_mask_set(path: impl AsRef<Path>, set: &InstanceMaskSet) -> Result<()> {
    let path = path.as_ref();
    let doc = MaskFileJson {
        scan_id: set.scan_id.clone(),
        grid: grid_to_json(&set.grid),
        instances: set
            .entries
            .iter()
            .map(|e| InstanceJson {
                id: e.instance_id,
                class: e.class_label,
                score: None,
                rle: rle_encode(&e.mask),
            })
            .collect(),
    };
    let mut text = serde_json::to_string(&doc).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a ground-truth label set written by [`write_mask_set`]. A `score`
/// field, if present, is ignored.
pub fn read_mask_set(path: impl AsRef<Path>) -> Result<InstanceMaskSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: MaskFileJson =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let grid = grid_from_json(&doc.grid, path)?;
    let entries = doc
        .instances
        .iter()
        .map(|inst| {
            Ok(MaskEntry {
                instance_id: inst.id,
                class_label: inst.class,
                mask: rle_decode(&inst.rle, grid)
                    .map_err(|e| Error::format(path, format!("instance {}: {e}", inst.id)))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    InstanceMaskSet::new(doc.scan_id, grid, entries)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Write scored prediction masks in the label schema plus a `score` field.
/// Instance ids are the input order.
pub fn write_scored_mask_set(
    path: impl AsRef<Path>,
    scan_id: &str,
    grid: &GridConfig,
    masks: &[(f64, BinaryMask)],
) -> Result<()> {
    let path = path.as_ref();
    let doc = MaskFileJson {
        scan_id: scan_id.to_string(),
        grid: grid_to_json(grid),
        instances: masks
            .iter()
            .enumerate()
            .map(|(i, (score, mask))| InstanceJson {
                id: i as u32,
                class: 0,
                score: Some(*score),
                rle: rle_encode(mask),
            })
            .collect(),
    };
    let mut text = serde_json::to_string(&doc).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read scored predictions; a missing `score` defaults to 1.0. Unlike
/// ground truth, prediction masks may be empty.
pub fn read_scored_mask_set(path: impl AsRef<Path>) -> Result<(String, Vec<(f64, BinaryMask)>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: MaskFileJson =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let grid = grid_from_json(&doc.grid, path)?;
    let masks = doc
        .instances
        .iter()
        .map(|inst| {
            let mask = rle_decode(&inst.rle, grid)
                .map_err(|e| Error::format(path, format!("instance {}: {e}", inst.id)))?;
            Ok((inst.score.unwrap_or(1.0), mask))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((doc.scan_id, masks))
}
