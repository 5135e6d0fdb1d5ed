//! `augment`: apply the configured augmentation pipeline to one scan and its
//! labels, writing outputs in the input formats.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use maskbev_core::augmentation::{augment_scan, InstanceBank, LabelSet, ScanData};
use maskbev_core::dataset_io::{
    read_kitti_objects, read_point_cloud, read_semantic_labels, write_kitti_objects,
    write_point_cloud, write_semantic_labels,
};
use maskbev_core::mask_gt::{read_mask_set, write_mask_set, InstanceMaskSet};

use crate::config::{Dataset, ToolkitConfig};

pub struct AugmentArgs {
    pub scan: PathBuf,
    pub labels: PathBuf,
    pub out_dir: PathBuf,
    pub calib: Option<PathBuf>,
    pub bank_scan: Option<PathBuf>,
    pub bank_labels: Option<PathBuf>,
    pub bank_calib: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn extension(path: &Path) -> anyhow::Result<&str> {
    path.extension()
        .and_then(|e| e.to_str())
        .with_context(|| format!("label path {} has no extension", path.display()))
}

fn load_labeled_scan(
    scan_path: &Path,
    labels_path: &Path,
    calib: Option<&PathBuf>,
    config: &ToolkitConfig,
) -> anyhow::Result<(ScanData, LabelSet)> {
    let cloud = read_point_cloud(scan_path)?;
    match extension(labels_path)? {
        "label" => {
            let scan = read_semantic_labels(labels_path, &cloud)?;
            // per-point labels follow their points; footprint labels are
            // not part of this route
            let grid = config.grid_for(Dataset::Semantickitti)?;
            let empty = InstanceMaskSet::new("", grid, Vec::new())?;
            Ok((ScanData::Semantic(scan), LabelSet::Masks(empty)))
        }
        "txt" => {
            let calib = calib.context("--calib is required for KITTI box labels")?;
            let boxes = read_kitti_objects(labels_path, calib)?;
            Ok((ScanData::Cloud(cloud), LabelSet::Boxes(boxes)))
        }
        "json" => {
            let set = read_mask_set(labels_path)?;
            Ok((ScanData::Cloud(cloud), LabelSet::Masks(set)))
        }
        other => bail!("unsupported label format .{other}"),
    }
}

fn load_bank(args: &AugmentArgs, config: &ToolkitConfig) -> anyhow::Result<Option<InstanceBank>> {
    let (scan_path, labels_path) = match (&args.bank_scan, &args.bank_labels) {
        (Some(s), Some(l)) => (s, l),
        (None, None) => return Ok(None),
        _ => bail!("--bank-scan and --bank-labels must be given together"),
    };
    let cloud = read_point_cloud(scan_path)?;
    match extension(labels_path)? {
        "label" => {
            let scan = read_semantic_labels(labels_path, &cloud)?;
            let grid = config.grid_for(Dataset::Semantickitti)?;
            Ok(Some(InstanceBank::harvest_semantic(
                &scan,
                &grid,
                &config.vehicle_class_set(),
            )))
        }
        "txt" => {
            let calib = args
                .bank_calib
                .as_ref()
                .context("--bank-calib is required for KITTI bank labels")?;
            let boxes = read_kitti_objects(labels_path, calib)?;
            Ok(Some(InstanceBank::harvest_boxes(&cloud, &boxes)))
        }
        other => bail!("unsupported bank label format .{other}"),
    }
}

pub fn run(args: &AugmentArgs, config: &ToolkitConfig) -> anyhow::Result<u8> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating output directory {}", args.out_dir.display()))?;
    let (scan, labels) = load_labeled_scan(&args.scan, &args.labels, args.calib.as_ref(), config)?;
    let bank = load_bank(args, config)?;

    let mut augment_config = config.augmentation(args.seed);
    if matches!(
        (&scan, &labels),
        (ScanData::Cloud(_), LabelSet::Masks(set)) if !set.entries.is_empty()
    ) {
        // per-instance moves need per-point ids to carry the points along
        if augment_config.instance_translate_max > 0.0
            || augment_config.instance_rotate_max_deg > 0.0
        {
            log::warn!("mask labels without per-point annotations: skipping per-instance transforms");
            augment_config.instance_translate_max = 0.0;
            augment_config.instance_rotate_max_deg = 0.0;
        }
    }

    let (out_scan, out_labels) = augment_scan(&scan, &labels, bank.as_ref(), &augment_config)?;

    let scan_name = args.scan.file_name().context("scan path has no file name")?;
    let labels_name = args.labels.file_name().context("label path has no file name")?;
    write_point_cloud(args.out_dir.join(scan_name), out_scan.cloud())?;
    match (&out_scan, &out_labels) {
        (ScanData::Semantic(scan), LabelSet::Masks(_)) => {
            write_semantic_labels(args.out_dir.join(labels_name), scan)?;
        }
        (_, LabelSet::Boxes(boxes)) => {
            let calib = args.calib.as_ref().expect("checked during load");
            write_kitti_objects(args.out_dir.join(labels_name), boxes, calib)?;
        }
        (_, LabelSet::Masks(set)) => {
            write_mask_set(args.out_dir.join(labels_name), set)?;
        }
    }
    Ok(0)
}
