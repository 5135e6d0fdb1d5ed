//! End-to-end CLI behavior on synthetic datasets.

mod common;

use common::{assert_exit, file_names, run_cli, stderr, stdout};

use maskbev_core::dataset_io::{read_kitti_objects, read_point_cloud};
use maskbev_core::mask_gt::read_mask_set;
use maskbev_core::pillar_encoder::{BevTensor, GridConfig};
use maskbev_core::synthetic::{
    kitti_scene, sequence_half_visible, sequence_simple, write_kitti_scenes, SyntheticCar,
};

use std::path::Path;

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn gen_masks_semantickitti_mini_sequence() {
    let dir = tempfile::tempdir().unwrap();
    sequence_simple().write_semantickitti(dir.path(), "00").unwrap();
    let out = dir.path().join("out");
    let output = run_cli(&[
        "gen-masks",
        "--dataset",
        "semantickitti",
        "--root",
        &path_str(dir.path()),
        "--sequence",
        "00",
        "--out",
        &path_str(&out),
    ]);
    assert_exit(&output, 0);

    for scan in ["000000", "000001", "000002"] {
        let set = read_mask_set(out.join(format!("{scan}.json"))).unwrap();
        assert_eq!(set.scan_id, scan);
        // all three cars are visible in every scan
        assert_eq!(set.len(), 3, "scan {scan}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scans"].as_array().unwrap().len(), 3);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn gen_masks_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    sequence_simple().write_semantickitti(dir.path(), "00").unwrap();
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out_a, &out_b] {
        let output = run_cli(&[
            "gen-masks",
            "--dataset",
            "semantickitti",
            "--root",
            &path_str(dir.path()),
            "--sequence",
            "00",
            "--out",
            &path_str(out),
        ]);
        assert_exit(&output, 0);
    }
    let names: Vec<String> = file_names(&out_a)
        .into_iter()
        .filter(|n| n != "manifest.json")
        .collect();
    assert!(!names.is_empty());
    common::assert_same_files(&out_a, &out_b, &names);
}

#[test]
fn gen_masks_empty_directory_fails_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let output = run_cli(&[
        "gen-masks",
        "--dataset",
        "semantickitti",
        "--root",
        &path_str(dir.path()),
        "--sequence",
        "00",
        "--out",
        &path_str(&out),
    ]);
    assert_exit(&output, 2);
    assert!(stderr(&output).contains("error"));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn gen_masks_partial_failure_lists_scan() {
    let dir = tempfile::tempdir().unwrap();
    sequence_simple().write_semantickitti(dir.path(), "00").unwrap();
    // truncate one label file so it no longer matches its scan
    let bad = dir.path().join("sequences/00/labels/000001.label");
    std::fs::write(&bad, [0u8; 4]).unwrap();
    let out = dir.path().join("out");
    let output = run_cli(&[
        "gen-masks",
        "--dataset",
        "semantickitti",
        "--root",
        &path_str(dir.path()),
        "--sequence",
        "00",
        "--out",
        &path_str(&out),
    ]);
    assert_exit(&output, 1);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let scans = manifest["scans"].as_array().unwrap();
    let failed: Vec<&str> = scans
        .iter()
        .filter(|s| s["status"] == "error")
        .map(|s| s["scan_id"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["000001"]);
    assert!(out.join("000000.json").exists());
    assert!(!out.join("000001.json").exists());
}

#[test]
fn gen_masks_kitti_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = vec![
        (
            "000000".to_string(),
            kitti_scene(&[SyntheticCar::new(12.0, 3.0, 0.2), SyntheticCar::new(25.0, -6.0, -0.9)]),
        ),
        ("000001".to_string(), kitti_scene(&[SyntheticCar::new(18.0, 0.0, 1.2)])),
    ];
    write_kitti_scenes(dir.path(), &scenes).unwrap();
    let out = dir.path().join("out");
    let overlays = dir.path().join("overlays");
    let output = run_cli(&[
        "gen-masks",
        "--dataset",
        "kitti",
        "--root",
        &path_str(dir.path()),
        "--out",
        &path_str(&out),
        "--overlay-dir",
        &path_str(&overlays),
    ]);
    assert_exit(&output, 0);
    let set = read_mask_set(out.join("000000.json")).unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(set.grid.width(), 500);
    let set = read_mask_set(out.join("000001.json")).unwrap();
    assert_eq!(set.len(), 1);
    assert!(overlays.join("000000.png").exists());
}

#[test]
fn encode_writes_expected_header_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scene = kitti_scene(&[SyntheticCar::new(15.0, 2.0, 0.4)]);
    write_kitti_scenes(dir.path(), &[("000000".to_string(), scene)]).unwrap();
    let scan = dir.path().join("velodyne/000000.bin");
    let (out_a, out_b) = (dir.path().join("a.bevt"), dir.path().join("b.bevt"));
    for out in [&out_a, &out_b] {
        let output = run_cli(&["encode", "--scan", &path_str(&scan), "--out", &path_str(out)]);
        assert_exit(&output, 0);
    }
    let bytes = std::fs::read(&out_a).unwrap();
    assert_eq!(&bytes[0..4], b"BEVT");
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    // synthetic scans carry intensity, so 11 feature channels
    assert_eq!(dim(0), 11);
    assert_eq!(dim(1), 500);
    assert_eq!(dim(2), 500);
    assert_eq!(bytes, std::fs::read(&out_b).unwrap());

    let tensor = BevTensor::read(&out_a, GridConfig::kitti()).unwrap();
    assert!(tensor.data().iter().any(|v| *v != 0.0));
}

#[test]
fn encode_empty_scan_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("empty.bin");
    std::fs::write(&scan, []).unwrap();
    let out = dir.path().join("empty.bevt");
    let output = run_cli(&["encode", "--scan", &path_str(&scan), "--out", &path_str(&out)]);
    assert_exit(&output, 0);
    let tensor = BevTensor::read(&out, GridConfig::kitti()).unwrap();
    assert!(tensor.data().iter().all(|v| *v == 0.0));
    assert_eq!(tensor.channels(), 0);
}

fn generate_gt(dir: &Path) -> std::path::PathBuf {
    sequence_simple().write_semantickitti(dir, "00").unwrap();
    let out = dir.join("gt");
    let output = run_cli(&[
        "gen-masks",
        "--dataset",
        "semantickitti",
        "--root",
        &path_str(dir),
        "--sequence",
        "00",
        "--out",
        &path_str(&out),
    ]);
    assert_exit(&output, 0);
    std::fs::remove_file(out.join("manifest.json")).unwrap();
    out
}

#[test]
fn eval_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gt = generate_gt(dir.path());
    let report_path = dir.path().join("report.json");
    let output = run_cli(&[
        "eval",
        "--pred-dir",
        &path_str(&gt),
        "--gt-dir",
        &path_str(&gt),
        "--out",
        &path_str(&report_path),
    ]);
    assert_exit(&output, 0);
    let text = stdout(&output);
    assert!(text.contains("AP50"), "table missing: {text}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["ap_at"]["0.50"], 1.0);
    assert_eq!(report["ap_at"]["0.70"], 1.0);
    assert_eq!(report["m_ap"], 1.0);
    assert_eq!(report["m_iou"], 1.0);
}

#[test]
fn eval_empty_pred_dir_writes_zero_report() {
    let dir = tempfile::tempdir().unwrap();
    let gt = generate_gt(dir.path());
    let empty = dir.path().join("preds");
    std::fs::create_dir_all(&empty).unwrap();
    let report_path = dir.path().join("report.json");
    let output = run_cli(&[
        "eval",
        "--pred-dir",
        &path_str(&empty),
        "--gt-dir",
        &path_str(&gt),
        "--out",
        &path_str(&report_path),
    ]);
    assert_exit(&output, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["ap_at"]["0.50"], 0.0);
    assert_eq!(report["num_pred"], 0);
}

#[test]
fn eval_scan_id_mismatch_is_enumerated() {
    let dir = tempfile::tempdir().unwrap();
    let gt = generate_gt(dir.path());
    let preds = dir.path().join("preds");
    std::fs::create_dir_all(&preds).unwrap();
    // one prediction file only: ids no longer align
    std::fs::copy(gt.join("000000.json"), preds.join("000000.json")).unwrap();
    let output = run_cli(&[
        "eval",
        "--pred-dir",
        &path_str(&preds),
        "--gt-dir",
        &path_str(&gt),
        "--out",
        &path_str(&dir.path().join("report.json")),
    ]);
    assert_exit(&output, 2);
    let err = stderr(&output);
    assert!(err.contains("000001"), "missing ids not listed: {err}");
}

fn disabled_augment_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("disabled.toml");
    std::fs::write(
        &path,
        "[augment]\ndrop_fraction = 0.0\nflip_y = false\npoint_noise_sigma = 0.0\nglobal_translate_max = 0.0\nglobal_rotate_max_deg = 0.0\ninstance_translate_max = 0.0\ninstance_rotate_max_deg = 0.0\npaste_max_instances = 0\n",
    )
    .unwrap();
    path
}

#[test]
fn augment_disabled_copies_inputs_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    sequence_simple().write_semantickitti(dir.path(), "00").unwrap();
    let scan = dir.path().join("sequences/00/velodyne/000000.bin");
    let labels = dir.path().join("sequences/00/labels/000000.label");
    let out = dir.path().join("aug");
    let config = disabled_augment_config(dir.path());
    let output = run_cli(&[
        "augment",
        "--scan",
        &path_str(&scan),
        "--labels",
        &path_str(&labels),
        "--config",
        &path_str(&config),
        "--out",
        &path_str(&out),
    ]);
    assert_exit(&output, 0);
    assert_eq!(
        std::fs::read(&scan).unwrap(),
        std::fs::read(out.join("000000.bin")).unwrap()
    );
    assert_eq!(
        std::fs::read(&labels).unwrap(),
        std::fs::read(out.join("000000.label")).unwrap()
    );
}

#[test]
fn augment_flip_only_mirrors_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = kitti_scene(&[SyntheticCar::new(12.0, 3.0, 0.4)]);
    write_kitti_scenes(dir.path(), &[("000000".to_string(), scene.clone())]).unwrap();
    let config_path = dir.path().join("flip.toml");
    std::fs::write(
        &config_path,
        "[augment]\ndrop_fraction = 0.0\nflip_y = true\npoint_noise_sigma = 0.0\nglobal_translate_max = 0.0\nglobal_rotate_max_deg = 0.0\ninstance_translate_max = 0.0\ninstance_rotate_max_deg = 0.0\npaste_max_instances = 0\n",
    )
    .unwrap();
    let out = dir.path().join("aug");
    let calib = dir.path().join("calib/000000.txt");
    let output = run_cli(&[
        "augment",
        "--scan",
        &path_str(&dir.path().join("velodyne/000000.bin")),
        "--labels",
        &path_str(&dir.path().join("label_2/000000.txt")),
        "--calib",
        &path_str(&calib),
        "--config",
        &path_str(&config_path),
        "--out",
        &path_str(&out),
    ]);
    assert_exit(&output, 0);
    let boxes = read_kitti_objects(out.join("000000.txt"), &calib).unwrap();
    assert_eq!(boxes.len(), 1);
    assert!((boxes[0].center.y + 3.0).abs() < 1e-3);
    assert!((boxes[0].yaw + 0.4).abs() < 1e-3);
    // points mirrored too
    let original = read_point_cloud(dir.path().join("velodyne/000000.bin")).unwrap();
    let flipped = read_point_cloud(out.join("000000.bin")).unwrap();
    assert_eq!(original.len(), flipped.len());
    assert_eq!(original.points()[0].y, -flipped.points()[0].y);
}

#[test]
fn augment_flip_only_mirrors_mask_labels() {
    let dir = tempfile::tempdir().unwrap();
    let scene = kitti_scene(&[SyntheticCar::new(12.0, 3.0, 0.0)]);
    write_kitti_scenes(dir.path(), &[("000000".to_string(), scene)]).unwrap();
    // produce mask labels for the scene, then flip scan + mask file together
    let gt = dir.path().join("gt");
    assert_exit(
        &run_cli(&[
            "gen-masks",
            "--dataset",
            "kitti",
            "--root",
            &path_str(dir.path()),
            "--out",
            &path_str(&gt),
        ]),
        0,
    );
    let config_path = dir.path().join("flip.toml");
    std::fs::write(
        &config_path,
        "[augment]\ndrop_fraction = 0.0\nflip_y = true\npoint_noise_sigma = 0.0\nglobal_translate_max = 0.0\nglobal_rotate_max_deg = 0.0\ninstance_translate_max = 0.0\ninstance_rotate_max_deg = 0.0\npaste_max_instances = 0\n",
    )
    .unwrap();
    let out = dir.path().join("aug");
    let output = run_cli(&[
        "augment",
        "--scan",
        &path_str(&dir.path().join("velodyne/000000.bin")),
        "--labels",
        &path_str(&gt.join("000000.json")),
        "--config",
        &path_str(&config_path),
        "--out",
        &path_str(&out),
    ]);
    assert_exit(&output, 0);
    let before = read_mask_set(gt.join("000000.json")).unwrap();
    let after = read_mask_set(out.join("000000.json")).unwrap();
    assert_eq!(before.len(), after.len());
    let (_, by) = before.entries[0].mask.centroid_world().unwrap();
    let (_, ay) = after.entries[0].mask.centroid_world().unwrap();
    assert!((ay + by).abs() < 1e-9, "mask centroid not mirrored: {by} vs {ay}");
}

#[test]
fn augment_same_seed_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    sequence_simple().write_semantickitti(dir.path(), "00").unwrap();
    let scan = dir.path().join("sequences/00/velodyne/000000.bin");
    let labels = dir.path().join("sequences/00/labels/000000.label");
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out_a, &out_b] {
        let output = run_cli(&[
            "augment",
            "--scan",
            &path_str(&scan),
            "--labels",
            &path_str(&labels),
            "--seed",
            "99",
            "--out",
            &path_str(out),
        ]);
        assert_exit(&output, 0);
    }
    common::assert_same_files(&out_a, &out_b, &file_names(&out_a));
    // seeded augmentation must actually change the scan
    assert_ne!(
        std::fs::read(&scan).unwrap(),
        std::fs::read(out_a.join("000000.bin")).unwrap()
    );
}

#[test]
fn analyze_completion_single_scan_sequence_is_unity() {
    let dir = tempfile::tempdir().unwrap();
    let mut seq = sequence_simple();
    seq.scans.truncate(1);
    seq.poses.truncate(1);
    seq.write_semantickitti(dir.path(), "00").unwrap();
    let prefix = dir.path().join("stats/completion");
    let output = run_cli(&[
        "analyze-completion",
        "--root",
        &path_str(dir.path()),
        "--sequence",
        "00",
        "--out",
        &path_str(&prefix),
    ]);
    assert_exit(&output, 0);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("stats/completion_summary.json")).unwrap(),
    )
    .unwrap();
    let ratios = summary["completion"]["best_case_ratios"].as_object().unwrap();
    assert!(!ratios.is_empty());
    for (_, v) in ratios {
        assert_eq!(v.as_f64().unwrap(), 1.0);
    }
    assert!(dir.path().join("stats/completion_best_case.csv").exists());
    let csv = std::fs::read_to_string(dir.path().join("stats/completion_all_scan.csv")).unwrap();
    assert!(csv.starts_with("bin_left,bin_right,count\n"));
}

#[test]
fn analyze_completion_half_visible_sequence() {
    let dir = tempfile::tempdir().unwrap();
    sequence_half_visible().write_semantickitti(dir.path(), "04").unwrap();
    let prefix = dir.path().join("half");
    let output = run_cli(&[
        "analyze-completion",
        "--root",
        &path_str(dir.path()),
        "--sequence",
        "04",
        "--out",
        &path_str(&prefix),
    ]);
    assert_exit(&output, 0);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("half_summary.json")).unwrap(),
    )
    .unwrap();
    let ratios = summary["completion"]["best_case_ratios"].as_object().unwrap();
    let half = ratios["1"].as_f64().unwrap();
    let full = ratios["2"].as_f64().unwrap();
    assert!((half - 0.5).abs() < 0.06, "half-visible best case {half}");
    assert!((full - 1.0).abs() < 0.02, "fully visible best case {full}");
}

#[test]
fn analyze_completion_with_predictions_reports_band() {
    let dir = tempfile::tempdir().unwrap();
    let gt = generate_gt(dir.path());
    let prefix = dir.path().join("pred_stats");
    let output = run_cli(&[
        "analyze-completion",
        "--root",
        &path_str(dir.path()),
        "--sequence",
        "00",
        "--pred-dir",
        &path_str(&gt),
        "--out",
        &path_str(&prefix),
    ]);
    assert_exit(&output, 0);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("pred_stats_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["prediction"]["pred_ratio_mean"], 1.0);
    assert_eq!(summary["prediction"]["pred_in_band_fraction"], 1.0);
    assert!(dir.path().join("pred_stats_pred_ratio.csv").exists());
}

#[test]
fn missing_out_flag_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_cli(&[
        "gen-masks",
        "--dataset",
        "kitti",
        "--root",
        &path_str(dir.path()),
    ]);
    assert_exit(&output, 2);
}

#[test]
fn log_env_var_controls_verbosity() {
    let dir = tempfile::tempdir().unwrap();
    sequence_simple().write_semantickitti(dir.path(), "00").unwrap();
    let out = dir.path().join("out");
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_maskbev-kit"))
        .env("MASKBEV_KIT_LOG", "info")
        .args([
            "gen-masks",
            "--dataset",
            "semantickitti",
            "--root",
            &path_str(dir.path()),
            "--sequence",
            "00",
            "--out",
            &path_str(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&output.stderr).contains("aggregated instances"));
}
