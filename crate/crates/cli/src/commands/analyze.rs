//! `analyze-completion`: single-scan vs complete footprint statistics for a
//! sequence, with optional prediction area ratios.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use maskbev_core::dataset_io::{
    crop_semantic_scan, read_point_cloud, read_poses, read_semantic_labels,
};
use maskbev_core::evaluation::{
    completion_analysis, prediction_area_analysis, CompletionStats, Histogram, HistogramSpec,
};
use maskbev_core::mask_gt::{
    aggregate_single_scan, generate_masks_from_instances, single_scan_mask,
    AggregatedInstanceMap, BinaryMask, InstanceMaskSet,
};

use crate::config::{Dataset, ToolkitConfig};
use crate::dataset::discover_semantickitti;

pub struct AnalyzeArgs {
    pub root: PathBuf,
    pub sequence: String,
    pub out_prefix: PathBuf,
    pub pred_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct Summary<'a> {
    completion: &'a CompletionStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    prediction: Option<&'a CompletionStats>,
}

pub fn run(args: &AnalyzeArgs, config: &ToolkitConfig, workers: usize) -> anyhow::Result<u8> {
    let seq = discover_semantickitti(&args.root, &args.sequence)?;
    let poses = read_poses(&seq.poses_path, &seq.calib_path)?;
    if poses.len() < seq.scan_ids.len() {
        anyhow::bail!(
            "{} poses for {} scans",
            poses.len(),
            seq.scan_ids.len()
        );
    }
    let crop = config.crop_for(Dataset::Semantickitti)?;
    let grid = config.grid_for(Dataset::Semantickitti)?;
    let params = config.mask_params()?;
    let classes = config.vehicle_class_set();
    let pool = crate::commands::thread_pool(workers)?;

    let scans: Vec<_> = pool.install(|| {
        seq.velodyne
            .par_iter()
            .zip(&seq.labels)
            .map(|(scan_path, label_path)| -> anyhow::Result<_> {
                let cloud = read_point_cloud(scan_path)?;
                let scan = read_semantic_labels(label_path, &cloud)?;
                Ok(crop_semantic_scan(&scan, &crop))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut map = AggregatedInstanceMap::default();
    for partial in scans
        .iter()
        .zip(&poses)
        .map(|(scan, pose)| aggregate_single_scan(scan, pose, &classes))
    {
        map.merge(partial);
    }

    let per_scan: Vec<(String, InstanceMaskSet, BTreeMap<u32, BinaryMask>)> = pool.install(|| {
        seq.scan_ids
            .par_iter()
            .zip(&scans)
            .zip(&poses)
            .map(|((scan_id, scan), pose)| -> anyhow::Result<_> {
                let complete =
                    generate_masks_from_instances(scan_id, &map, scan, pose, &grid, &params)?;
                let mut singles = BTreeMap::new();
                for entry in &complete.entries {
                    if let Some(mask) = single_scan_mask(scan, entry.instance_id, &grid, &params) {
                        singles.insert(entry.instance_id, mask);
                    }
                }
                Ok((scan_id.clone(), complete, singles))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut complete_sets = BTreeMap::new();
    let mut single_sets = BTreeMap::new();
    for (scan_id, complete, singles) in per_scan {
        complete_sets.insert(scan_id.clone(), complete);
        single_sets.insert(scan_id, singles);
    }

    let spec = HistogramSpec::default();
    let stats = completion_analysis(
        &complete_sets,
        &single_sets,
        params.min_area_pixels,
        &spec,
    )?;
    println!(
        "best-case mean {:.4} (inclusive {:.4}); all-scan mean {:.4} ± {:.4} over {} ratios",
        stats.best_case_mean,
        stats.best_case_mean_inclusive,
        stats.all_scan_mean,
        stats.all_scan_std,
        stats.all_scan_ratios.len()
    );

    let prediction = match &args.pred_dir {
        Some(dir) => {
            let preds = crate::commands::read_pred_dir(dir)?;
            let pred_stats = prediction_area_analysis(&preds, &complete_sets, &spec)?;
            println!(
                "prediction/complete area ratio mean {:.4}; in-band fraction {:.4}",
                pred_stats.pred_ratio_mean, pred_stats.pred_in_band_fraction
            );
            Some(pred_stats)
        }
        None => None,
    };

    write_outputs(&args.out_prefix, &stats, prediction.as_ref())?;
    Ok(0)
}

fn write_histogram_csv(path: &Path, histogram: &Histogram) -> anyhow::Result<()> {
    let mut text = String::from("bin_left,bin_right,count\n");
    for (i, count) in histogram.counts.iter().enumerate() {
        writeln!(
            text,
            "{},{},{}",
            histogram.edges[i],
            histogram.edges[i + 1],
            count
        )
        .expect("write to string");
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_outputs(
    prefix: &Path,
    stats: &CompletionStats,
    prediction: Option<&CompletionStats>,
) -> anyhow::Result<()> {
    if let Some(parent) = prefix.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let with_suffix = |suffix: &str| -> PathBuf {
        let mut name = prefix
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "completion".into());
        name.push_str(suffix);
        prefix.with_file_name(name)
    };
    write_histogram_csv(&with_suffix("_best_case.csv"), &stats.best_case_histogram)?;
    write_histogram_csv(&with_suffix("_all_scan.csv"), &stats.all_scan_histogram)?;
    if let Some(pred) = prediction {
        write_histogram_csv(&with_suffix("_pred_ratio.csv"), &pred.pred_histogram)?;
    }
    let summary = Summary {
        completion: stats,
        prediction,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    let path = with_suffix("_summary.json");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
