//! `eval`: mask detection metrics from prediction and ground-truth label
//! directories.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;

use maskbev_core::dataset_io::read_kitti_objects;
use maskbev_core::evaluation::{
    difficulty_bucket, evaluate_dataset, evaluate_per_difficulty, Difficulty, MetricsReport,
};

use crate::config::ToolkitConfig;

pub struct EvalArgs {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub report: PathBuf,
    /// KITTI label directory for per-difficulty AP.
    pub labels_dir: Option<PathBuf>,
    pub calib_dir: Option<PathBuf>,
    /// IoU threshold of the per-difficulty breakdown.
    pub difficulty_threshold: f64,
}

pub fn run(args: &EvalArgs, config: &ToolkitConfig) -> anyhow::Result<u8> {
    let gts = crate::commands::read_mask_dir(&args.gt_dir)?;
    let mut preds = crate::commands::read_pred_dir(&args.pred_dir)?;
    if preds.is_empty() {
        // an entirely empty prediction directory means "no detections"
        for scan_id in gts.keys() {
            preds.insert(scan_id.clone(), Vec::new());
        }
    }
    let eval_config = config.eval_config()?;
    let mut report = evaluate_dataset(&preds, &gts, &eval_config)?;

    if let (Some(labels_dir), Some(calib_dir)) = (&args.labels_dir, &args.calib_dir) {
        let mut difficulty: BTreeMap<String, BTreeMap<u32, Difficulty>> = BTreeMap::new();
        for scan_id in gts.keys() {
            let boxes = read_kitti_objects(
                labels_dir.join(format!("{scan_id}.txt")),
                calib_dir.join(format!("{scan_id}.txt")),
            )?;
            difficulty.insert(
                scan_id.clone(),
                boxes
                    .iter()
                    .enumerate()
                    .map(|(i, b)| (i as u32, difficulty_bucket(b)))
                    .collect(),
            );
        }
        report.per_difficulty = Some(evaluate_per_difficulty(
            &preds,
            &gts,
            &difficulty,
            args.difficulty_threshold,
            eval_config.ap_mode,
        )?);
    }

    print_table(&report);
    if let Some(parent) = args.report.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&args.report, text)
        .with_context(|| format!("writing report {}", args.report.display()))?;
    Ok(0)
}

fn print_table(report: &MetricsReport) {
    let ap = |key: &str| report.ap_at.get(key).copied().unwrap_or(f64::NAN);
    println!("AP50     AP70     mAP      mIoU");
    println!(
        "{:<8.4} {:<8.4} {:<8.4} {:<8.4}",
        ap("0.50"),
        ap("0.70"),
        report.m_ap,
        report.m_iou
    );
    println!(
        "gt: {}  pred: {}  tp@0.5: {}",
        report.num_gt, report.num_pred, report.num_tp
    );
    if let Some(per_difficulty) = &report.per_difficulty {
        for bucket in ["Easy", "Moderate", "Hard"] {
            if let Some(ap) = per_difficulty.get(bucket) {
                println!("AP {bucket:<9} {ap:.4}");
            }
        }
    }
}
