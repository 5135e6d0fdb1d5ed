//! `gen-masks`: complete BEV mask label files from a dataset directory.

use std::path::PathBuf;

use anyhow::Context;
use rayon::prelude::*;

use maskbev_core::dataset_io::{
    crop_semantic_scan, read_kitti_objects, read_point_cloud, read_poses, read_semantic_labels,
    PointCloud, SemanticScan,
};
use maskbev_core::evaluation::{render_overlay_set, write_overlay_png};
use maskbev_core::mask_gt::{
    aggregate_single_scan, generate_masks_from_boxes, generate_masks_from_instances,
    write_mask_set, AggregatedInstanceMap, InstanceMaskSet,
};

use crate::config::{Dataset, ToolkitConfig};
use crate::dataset::{discover_kitti, discover_semantickitti};
use crate::manifest::{write_manifest, ManifestBuilder, ScanStatus};

pub struct GenMasksArgs {
    pub dataset: Dataset,
    pub root: PathBuf,
    pub sequence: Option<String>,
    pub out_dir: PathBuf,
    pub overlay_dir: Option<PathBuf>,
}

pub fn run(args: &GenMasksArgs, config: &ToolkitConfig, workers: usize) -> anyhow::Result<u8> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating output directory {}", args.out_dir.display()))?;
    if let Some(dir) = &args.overlay_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating overlay directory {}", dir.display()))?;
    }
    let mut manifest = ManifestBuilder::new(config.hash());
    let pool = crate::commands::thread_pool(workers)?;

    let statuses = match args.dataset {
        Dataset::Semantickitti => run_semantickitti(args, config, &pool, &mut manifest)?,
        Dataset::Kitti => run_kitti(args, config, &pool, &mut manifest)?,
    };
    manifest.extend(statuses);

    let failures = manifest.failure_count();
    let manifest = manifest.finish();
    write_manifest(&args.out_dir.join("manifest.json"), &manifest)?;
    if failures > 0 {
        log::error!("{failures} scan(s) failed; see manifest");
        Ok(1)
    } else {
        Ok(0)
    }
}

fn write_outputs(
    args: &GenMasksArgs,
    scan_id: &str,
    set: &InstanceMaskSet,
    cloud: Option<&PointCloud>,
) -> anyhow::Result<()> {
    write_mask_set(args.out_dir.join(format!("{scan_id}.json")), set)?;
    if let Some(dir) = &args.overlay_dir {
        let empty = PointCloud::empty();
        let image = render_overlay_set(cloud.unwrap_or(&empty), set);
        write_overlay_png(dir.join(format!("{scan_id}.png")), &image)?;
    }
    Ok(())
}

fn run_semantickitti(
    args: &GenMasksArgs,
    config: &ToolkitConfig,
    pool: &rayon::ThreadPool,
    manifest: &mut ManifestBuilder,
) -> anyhow::Result<Vec<ScanStatus>> {
    let sequence = args
        .sequence
        .as_deref()
        .context("--sequence is required for semantickitti")?;
    let seq = discover_semantickitti(&args.root, sequence)?;
    manifest.checksum_input(&seq.poses_path)?;
    manifest.checksum_input(&seq.calib_path)?;
    for path in seq.velodyne.iter().chain(&seq.labels) {
        manifest.checksum_input(path)?;
    }

    let poses = read_poses(&seq.poses_path, &seq.calib_path)?;
    if poses.len() < seq.scan_ids.len() {
        anyhow::bail!(
            "{} poses for {} scans in sequence {sequence}",
            poses.len(),
            seq.scan_ids.len()
        );
    }
    let crop = config.crop_for(Dataset::Semantickitti)?;
    let grid = config.grid_for(Dataset::Semantickitti)?;
    let params = config.mask_params()?;
    let classes = config.vehicle_class_set();

    // phase 1: load and crop scans (parallel, order-preserving)
    let loaded: Vec<Result<SemanticScan, String>> = pool.install(|| {
        seq.velodyne
            .par_iter()
            .zip(&seq.labels)
            .map(|(scan_path, label_path)| {
                let cloud = read_point_cloud(scan_path).map_err(|e| e.to_string())?;
                let scan = read_semantic_labels(label_path, &cloud).map_err(|e| e.to_string())?;
                Ok(crop_semantic_scan(&scan, &crop))
            })
            .collect()
    });

    // phase 2: aggregate the sequence map from successfully loaded scans
    let partials: Vec<Option<AggregatedInstanceMap>> = pool.install(|| {
        loaded
            .par_iter()
            .zip(&poses)
            .map(|(scan, pose)| {
                scan.as_ref()
                    .ok()
                    .map(|s| aggregate_single_scan(s, pose, &classes))
            })
            .collect()
    });
    let mut map = AggregatedInstanceMap::default();
    for partial in partials.into_iter().flatten() {
        map.merge(partial);
    }
    log::info!(
        "sequence {sequence}: {} aggregated instances",
        map.instances().len()
    );

    // phase 3: per-scan complete masks
    let results: Vec<ScanStatus> = pool.install(|| {
        seq.scan_ids
            .par_iter()
            .zip(&loaded)
            .zip(&poses)
            .map(|((scan_id, loaded), pose)| match loaded {
                Err(e) => ScanStatus::failed(scan_id, e.clone()),
                Ok(scan) => {
                    let generated =
                        generate_masks_from_instances(scan_id, &map, scan, pose, &grid, &params)
                            .map_err(|e| e.to_string())
                            .and_then(|set| {
                                write_outputs(args, scan_id, &set, Some(&scan.cloud))
                                    .map(|_| set.len())
                                    .map_err(|e| e.to_string())
                            });
                    match generated {
                        Ok(count) => {
                            log::debug!("{scan_id}: {count} instances");
                            ScanStatus::ok(scan_id)
                        }
                        Err(e) => ScanStatus::failed(scan_id, e),
                    }
                }
            })
            .collect()
    });
    Ok(results)
}

fn run_kitti(
    args: &GenMasksArgs,
    config: &ToolkitConfig,
    pool: &rayon::ThreadPool,
    manifest: &mut ManifestBuilder,
) -> anyhow::Result<Vec<ScanStatus>> {
    let scenes = discover_kitti(&args.root)?;
    for scene in &scenes {
        manifest.checksum_input(&scene.label)?;
        manifest.checksum_input(&scene.calib)?;
    }
    let grid = config.grid_for(Dataset::Kitti)?;
    let params = config.mask_params()?;

    let results: Vec<ScanStatus> = pool.install(|| {
        scenes
            .par_iter()
            .map(|scene| {
                let generated = read_kitti_objects(&scene.label, &scene.calib)
                    .and_then(|boxes| {
                        generate_masks_from_boxes(&scene.scan_id, &boxes, &grid, &params)
                    })
                    .map_err(|e| e.to_string())
                    .and_then(|set| {
                        let cloud = match (&args.overlay_dir, &scene.velodyne) {
                            (Some(_), Some(path)) => {
                                Some(read_point_cloud(path).map_err(|e| e.to_string())?)
                            }
                            _ => None,
                        };
                        write_outputs(args, &scene.scan_id, &set, cloud.as_ref())
                            .map_err(|e| e.to_string())
                    });
                match generated {
                    Ok(()) => ScanStatus::ok(&scene.scan_id),
                    Err(e) => ScanStatus::failed(&scene.scan_id, e),
                }
            })
            .collect()
    });
    Ok(results)
}
