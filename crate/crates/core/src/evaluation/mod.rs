//! Mask-based detection metrics: greedy score-ordered matching, average
//! precision over IoU thresholds, mAP/mIoU, KITTI difficulty buckets, and
//! footprint-completion statistics.
//!
//! Evaluation matching is greedy by score (standard detection AP) and
//! distinct from the Hungarian matching used by the training loss.

mod overlay;

pub use overlay::{render_overlay, render_overlay_set, write_overlay_png};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset_io::ObjectBox3D;
use crate::error::{Error, Result};
use crate::mask_gt::{BinaryMask, InstanceMaskSet};
use crate::set_matching::{mask_iou_with_stats, MaskStats};

/// Scored footprint predictions for one scan.
pub type ScoredMasks = Vec<(f64, BinaryMask)>;

/// Per-prediction matching outcome, in descending score order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredRecord {
    pub score: f64,
    pub is_tp: bool,
    /// Instance id of the matched ground truth for true positives.
    pub matched_gt: Option<u32>,
    /// IoU with the matched ground truth (best unmatched IoU for false
    /// positives, 0 when no ground truth remains).
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionOutcome {
    pub records: Vec<PredRecord>,
}

/// Per-scan matching inputs computed once and reusable across thresholds:
/// scores, the prediction×GT IoU matrix and the GT instance ids.
struct ScanMatchTable {
    scores: Vec<f64>,
    iou: Vec<Vec<f64>>,
    gt_ids: Vec<u32>,
}

fn scan_match_table(preds: &[(f64, BinaryMask)], gts: &InstanceMaskSet) -> Result<ScanMatchTable> {
    for (score, mask) in preds {
        if !score.is_finite() {
            return Err(Error::Invalid(format!("non-finite prediction score {score}")));
        }
        if !mask.grid.same_raster(&gts.grid) {
            return Err(Error::GridMismatch);
        }
    }
    let gt_stats: Vec<MaskStats> = gts.entries.iter().map(|e| MaskStats::of(&e.mask)).collect();
    let iou = preds
        .iter()
        .map(|(_, mask)| {
            let stats = MaskStats::of(mask);
            gts.entries
                .iter()
                .zip(&gt_stats)
                .map(|(entry, entry_stats)| {
                    mask_iou_with_stats(mask, &stats, &entry.mask, entry_stats)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanMatchTable {
        scores: preds.iter().map(|(s, _)| *s).collect(),
        iou,
        gt_ids: gts.entries.iter().map(|e| e.instance_id).collect(),
    })
}

fn greedy_from_table(table: &ScanMatchTable, threshold: f64) -> DetectionOutcome {
    let mut order: Vec<usize> = (0..table.scores.len()).collect();
    order.sort_by(|&a, &b| {
        table.scores[b]
            .partial_cmp(&table.scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut gt_taken = vec![false; table.gt_ids.len()];
    let mut records = Vec::with_capacity(order.len());
    for idx in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, &iou) in table.iou[idx].iter().enumerate() {
            if gt_taken[gi] {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, biou)) => {
                    iou > biou || (iou == biou && table.gt_ids[gi] < table.gt_ids[bi])
                }
            };
            if better {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, iou)) if iou >= threshold => {
                gt_taken[gi] = true;
                records.push(PredRecord {
                    score: table.scores[idx],
                    is_tp: true,
                    matched_gt: Some(table.gt_ids[gi]),
                    iou,
                });
            }
            other => records.push(PredRecord {
                score: table.scores[idx],
                is_tp: false,
                matched_gt: None,
                iou: other.map_or(0.0, |(_, iou)| iou),
            }),
        }
    }
    DetectionOutcome { records }
}

/// Match predictions to ground truths greedily in descending score order
/// (ties keep input order). Each prediction takes the unmatched ground
/// truth with the highest IoU when that IoU reaches `threshold` (GT ties
/// resolve to the lower instance id); otherwise it is a false positive.
pub fn greedy_match(
    preds: &[(f64, BinaryMask)],
    gts: &InstanceMaskSet,
    threshold: f64,
) -> Result<DetectionOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Invalid(format!("threshold {threshold} outside (0, 1]")));
    }
    Ok(greedy_from_table(&scan_match_table(preds, gts)?, threshold))
}

/// Average-precision interpolation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// Exact area under the precision envelope (default).
    #[default]
    AllPoint,
    /// Mean envelope precision at recalls {0, 0.1, …, 1.0}.
    ElevenPoint,
    /// Mean envelope precision at recalls {1/40, …, 40/40} (KITTI R40).
    FortyPoint,
}

/// AP from score-ordered TP/FP flags. With `num_gt = 0` the AP is defined
/// as 1.0 when there are no predictions and 0.0 otherwise.
pub fn average_precision_from_flags(flags: &[bool], num_gt: usize, mode: ApMode) -> f64 {
    if num_gt == 0 {
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    let n = flags.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (k, &flag) in flags.iter().enumerate() {
        tp += flag as usize;
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    // precision envelope: max precision at recall ≥ r
    let mut envelope = precision.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }

    let env_at = |r: f64| -> f64 {
        for k in 0..n {
            if recall[k] >= r {
                return envelope[k];
            }
        }
        0.0
    };

    match mode {
        ApMode::AllPoint => {
            // each TP advances recall by exactly 1/num_gt; divide once so a
            // perfect run is exactly 1.0
            let mut sum = 0.0;
            for k in 0..n {
                if flags[k] {
                    sum += envelope[k];
                }
            }
            sum / num_gt as f64
        }
        ApMode::ElevenPoint => (0..=10).map(|i| env_at(i as f64 / 10.0)).sum::<f64>() / 11.0,
        ApMode::FortyPoint => (1..=40).map(|i| env_at(i as f64 / 40.0)).sum::<f64>() / 40.0,
    }
}

/// AP of one matching outcome.
pub fn average_precision(outcome: &DetectionOutcome, num_gt: usize, mode: ApMode) -> f64 {
    let flags: Vec<bool> = outcome.records.iter().map(|r| r.is_tp).collect();
    average_precision_from_flags(&flags, num_gt, mode)
}

/// How mIoU averages true-positive IoUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MiouMode {
    /// Mean IoU over true positives (default).
    #[default]
    TpMean,
    /// Sum of TP IoUs divided by the ground-truth count (unmatched count 0).
    GtMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Thresholds reported individually (AP50, AP70 by default).
    pub ap_thresholds: Vec<f64>,
    /// IoU ladder averaged into mAP.
    pub map_ladder: Vec<f64>,
    pub ap_mode: ApMode,
    pub miou_mode: MiouMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ap_thresholds: vec![0.5, 0.7],
            map_ladder: (0..10).map(|i| 0.50 + 0.05 * i as f64).collect(),
            ap_mode: ApMode::AllPoint,
            miou_mode: MiouMode::TpMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// AP per reported threshold, keyed by the formatted threshold ("0.50").
    pub ap_at: BTreeMap<String, f64>,
    /// Mean AP over the IoU ladder.
    pub m_ap: f64,
    /// Mean IoU of true positives at threshold 0.5.
    pub m_iou: f64,
    /// Per-difficulty AP when KITTI annotations were supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_difficulty: Option<BTreeMap<String, f64>>,
    pub num_gt: usize,
    pub num_pred: usize,
    /// True positives at threshold 0.5.
    pub num_tp: usize,
}

pub fn threshold_key(threshold: f64) -> String {
    format!("{threshold:.2}")
}

/// Pool every scan's predictions into one score-sorted list per threshold
/// (matching stays per scan) and compute AP50/AP70, mAP and mIoU.
pub fn evaluate_dataset(
    preds: &BTreeMap<String, ScoredMasks>,
    gts: &BTreeMap<String, InstanceMaskSet>,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    let missing_in_preds: Vec<String> = gts.keys().filter(|k| !preds.contains_key(*k)).cloned().collect();
    let missing_in_gts: Vec<String> = preds.keys().filter(|k| !gts.contains_key(*k)).cloned().collect();
    if !missing_in_preds.is_empty() || !missing_in_gts.is_empty() {
        return Err(Error::ScanIdMismatch {
            missing_in_preds,
            missing_in_gts,
        });
    }

    let num_gt: usize = gts.values().map(|set| set.len()).sum();
    let num_pred: usize = preds.values().map(|masks| masks.len()).sum();

    // the IoU matrices are threshold-independent; compute them once
    let tables = preds
        .iter()
        .map(|(scan_id, masks)| scan_match_table(masks, &gts[scan_id]))
        .collect::<Result<Vec<_>>>()?;

    let pooled_flags = |threshold: f64| -> (Vec<bool>, Vec<f64>) {
        // (score, scan order, record order) keys make pooling deterministic
        let mut pool: Vec<(f64, usize, usize, bool, f64)> = Vec::new();
        for (scan_idx, table) in tables.iter().enumerate() {
            let outcome = greedy_from_table(table, threshold);
            for (rec_idx, rec) in outcome.records.iter().enumerate() {
                pool.push((rec.score, scan_idx, rec_idx, rec.is_tp, rec.iou));
            }
        }
        pool.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let flags = pool.iter().map(|r| r.3).collect();
        let tp_ious = pool.iter().filter(|r| r.3).map(|r| r.4).collect();
        (flags, tp_ious)
    };

    let mut ap_at = BTreeMap::new();
    for &t in &config.ap_thresholds {
        let (flags, _) = pooled_flags(t);
        ap_at.insert(
            threshold_key(t),
            average_precision_from_flags(&flags, num_gt, config.ap_mode),
        );
    }

    let mut ladder_sum = 0.0;
    for &t in &config.map_ladder {
        let (flags, _) = pooled_flags(t);
        ladder_sum += average_precision_from_flags(&flags, num_gt, config.ap_mode);
    }
    let m_ap = if config.map_ladder.is_empty() {
        0.0
    } else {
        ladder_sum / config.map_ladder.len() as f64
    };

    let (_, tp_ious) = pooled_flags(0.5);
    let num_tp = tp_ious.len();
    let m_iou = match config.miou_mode {
        MiouMode::TpMean => {
            if num_tp == 0 {
                0.0
            } else {
                tp_ious.iter().sum::<f64>() / num_tp as f64
            }
        }
        MiouMode::GtMean => {
            if num_gt == 0 {
                0.0
            } else {
                tp_ious.iter().sum::<f64>() / num_gt as f64
            }
        }
    };

    Ok(MetricsReport {
        ap_at,
        m_ap,
        m_iou,
        per_difficulty: None,
        num_gt,
        num_pred,
        num_tp,
    })
}

/// KITTI difficulty levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl Difficulty {
    pub fn name(&self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Moderate => "Moderate",
            Difficulty::Hard => "Hard",
            Difficulty::Ignored => "Ignored",
        }
    }
}

/// The easiest qualifying KITTI bucket: Easy needs image bbox height ≥ 40 px,
/// no occlusion and truncation ≤ 0.15; Moderate ≥ 25 px, occlusion ≤ 1,
/// truncation ≤ 0.30; Hard ≥ 25 px, occlusion ≤ 2, truncation ≤ 0.50.
pub fn difficulty_bucket(object: &ObjectBox3D) -> Difficulty {
    let h = object.image_bbox_height;
    let occ = object.occluded;
    let tr = object.truncated;
    if h >= 40.0 && occ == 0 && tr <= 0.15 {
        Difficulty::Easy
    } else if h >= 25.0 && occ <= 1 && tr <= 0.30 {
        Difficulty::Moderate
    } else if h >= 25.0 && occ <= 2 && tr <= 0.50 {
        Difficulty::Hard
    } else {
        Difficulty::Ignored
    }
}

/// Per-difficulty AP at one threshold. Following the benchmark convention,
/// the evaluation for bucket D counts ground truths up to D as active;
/// detections matched to harder or ignored ground truths are discarded
/// (neither TP nor FP).
pub fn evaluate_per_difficulty(
    preds: &BTreeMap<String, ScoredMasks>,
    gts: &BTreeMap<String, InstanceMaskSet>,
    gt_difficulty: &BTreeMap<String, BTreeMap<u32, Difficulty>>,
    threshold: f64,
    mode: ApMode,
) -> Result<BTreeMap<String, f64>> {
    let mut result = BTreeMap::new();
    for bucket in [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard] {
        let mut pool: Vec<(f64, usize, usize, bool)> = Vec::new();
        let mut active_gt = 0usize;
        for (scan_idx, (scan_id, masks)) in preds.iter().enumerate() {
            let gt_set = gts
                .get(scan_id)
                .ok_or_else(|| Error::ScanIdMismatch {
                    missing_in_preds: vec![],
                    missing_in_gts: vec![scan_id.clone()],
                })?;
            let difficulties = gt_difficulty.get(scan_id);
            let diff_of = |id: u32| -> Difficulty {
                difficulties
                    .and_then(|m| m.get(&id).copied())
                    .unwrap_or(Difficulty::Ignored)
            };
            active_gt += gt_set
                .entries
                .iter()
                .filter(|e| diff_of(e.instance_id) <= bucket)
                .count();
            let outcome = greedy_match(masks, gt_set, threshold)?;
            for (rec_idx, rec) in outcome.records.iter().enumerate() {
                match rec.matched_gt {
                    Some(id) if diff_of(id) <= bucket => {
                        pool.push((rec.score, scan_idx, rec_idx, true));
                    }
                    Some(_) => {} // matched an out-of-bucket GT: discard
                    None => pool.push((rec.score, scan_idx, rec_idx, false)),
                }
            }
        }
        pool.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let flags: Vec<bool> = pool.iter().map(|r| r.3).collect();
        result.insert(
            bucket.name().to_string(),
            average_precision_from_flags(&flags, active_gt, mode),
        );
    }
    Ok(result)
}

/// Histogram over a fixed range; out-of-range values clamp into the end
/// bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 1.5,
            bins: 20,
        }
    }
}

impl HistogramSpec {
    pub fn build(&self, values: &[f64]) -> Histogram {
        let edges: Vec<f64> = (0..=self.bins)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / self.bins as f64)
            .collect();
        let mut counts = vec![0u64; self.bins];
        for &v in values {
            let t = (v - self.lo) / (self.hi - self.lo);
            let bin = ((t * self.bins as f64).floor() as isize).clamp(0, self.bins as isize - 1);
            counts[bin as usize] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Acceptance band for prediction/complete area ratios: a prediction of
/// otherwise perfect shape stays above 70% IoU while its area ratio lies in
/// [0.7, 100/70].
pub const AREA_RATIO_BAND: (f64, f64) = (0.7, 100.0 / 70.0);

/// Footprint-completion statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionStats {
    /// Per-instance best (max over scans) single/complete area ratio.
    pub best_case_ratios: BTreeMap<u32, f64>,
    /// Mean of the best-case series, excluding instances whose best
    /// single-scan area stays below the low-area cutoff.
    pub best_case_mean: f64,
    /// Mean of the best-case series without the cutoff.
    pub best_case_mean_inclusive: f64,
    /// One ratio per (instance, scan) with the instance present.
    pub all_scan_ratios: Vec<f64>,
    pub all_scan_mean: f64,
    /// Population standard deviation of the all-scan series.
    pub all_scan_std: f64,
    pub best_case_histogram: Histogram,
    pub all_scan_histogram: Histogram,
    /// Per-true-positive prediction/complete area ratios.
    pub pred_ratios: Vec<f64>,
    pub pred_ratio_mean: f64,
    /// Fraction of `pred_ratios` inside [`AREA_RATIO_BAND`] (inclusive).
    pub pred_in_band_fraction: f64,
    pub pred_histogram: Histogram,
}

impl CompletionStats {
    fn empty(spec: &HistogramSpec) -> Self {
        Self {
            best_case_ratios: BTreeMap::new(),
            best_case_mean: 0.0,
            best_case_mean_inclusive: 0.0,
            all_scan_ratios: Vec::new(),
            all_scan_mean: 0.0,
            all_scan_std: 0.0,
            best_case_histogram: spec.build(&[]),
            all_scan_histogram: spec.build(&[]),
            pred_ratios: Vec::new(),
            pred_ratio_mean: 0.0,
            pred_in_band_fraction: 0.0,
            pred_histogram: spec.build(&[]),
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mu = mean(values);
    (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Compare per-scan single-view masks against the complete masks of the
/// same instances.
///
/// `single_masks[scan][instance]` holds the single-scan footprint for every
/// (scan, instance) with the instance visible; a complete mask for that
/// scan/instance must exist in `complete_masks`. Instances whose best
/// single-scan area stays below `low_area_cutoff` are excluded from the
/// best-case mean (they remain in the inclusive mean and the all-scan
/// series).
pub fn completion_analysis(
    complete_masks: &BTreeMap<String, InstanceMaskSet>,
    single_masks: &BTreeMap<String, BTreeMap<u32, BinaryMask>>,
    low_area_cutoff: usize,
    spec: &HistogramSpec,
) -> Result<CompletionStats> {
    let mut best: BTreeMap<u32, (f64, usize)> = BTreeMap::new(); // ratio, best area
    let mut all_scan = Vec::new();
    for (scan_id, per_instance) in single_masks {
        let complete = complete_masks.get(scan_id).ok_or_else(|| {
            Error::Invalid(format!("no complete mask set for scan {scan_id}"))
        })?;
        for (&instance_id, single) in per_instance {
            let entry = complete.get(instance_id).ok_or_else(|| {
                Error::Invalid(format!(
                    "no complete mask for instance {instance_id} in scan {scan_id}"
                ))
            })?;
            let a_complete = entry.mask.area();
            let a_single = single.area();
            let ratio = a_single as f64 / a_complete as f64;
            all_scan.push(ratio);
            let slot = best.entry(instance_id).or_insert((ratio, a_single));
            if ratio > slot.0 {
                *slot = (ratio, a_single);
            } else if a_single > slot.1 {
                slot.1 = a_single;
            }
        }
    }

    let best_case_ratios: BTreeMap<u32, f64> = best.iter().map(|(k, v)| (*k, v.0)).collect();
    let filtered: Vec<f64> = best
        .values()
        .filter(|(_, area)| *area >= low_area_cutoff)
        .map(|(r, _)| *r)
        .collect();
    let inclusive: Vec<f64> = best.values().map(|(r, _)| *r).collect();

    let mut stats = CompletionStats::empty(spec);
    stats.best_case_ratios = best_case_ratios;
    stats.best_case_mean = mean(&filtered);
    stats.best_case_mean_inclusive = mean(&inclusive);
    stats.all_scan_mean = mean(&all_scan);
    stats.all_scan_std = std_dev(&all_scan);
    stats.best_case_histogram = spec.build(&filtered);
    stats.all_scan_histogram = spec.build(&all_scan);
    stats.all_scan_ratios = all_scan;
    Ok(stats)
}

/// Compare matched prediction areas against their complete ground-truth
/// masks: per-TP ratio A_pred / A_complete at matching threshold 0.5, the
/// mean ratio and the fraction inside [`AREA_RATIO_BAND`].
pub fn prediction_area_analysis(
    preds: &BTreeMap<String, ScoredMasks>,
    gts: &BTreeMap<String, InstanceMaskSet>,
    spec: &HistogramSpec,
) -> Result<CompletionStats> {
    let mut ratios = Vec::new();
    for (scan_id, masks) in preds {
        let gt_set = match gts.get(scan_id) {
            Some(set) => set,
            None => continue,
        };
        let outcome = greedy_match(masks, gt_set, 0.5)?;
        // records are in descending score order; re-run the ordering to map
        // records back to their prediction masks
        let mut order: Vec<usize> = (0..masks.len()).collect();
        order.sort_by(|&a, &b| masks[b].0.partial_cmp(&masks[a].0).unwrap().then(a.cmp(&b)));
        for (rec, &pred_idx) in outcome.records.iter().zip(&order) {
            if let Some(gt_id) = rec.matched_gt {
                let gt_area = gt_set.get(gt_id).expect("matched id exists").mask.area();
                ratios.push(masks[pred_idx].1.area() as f64 / gt_area as f64);
            }
        }
    }
    let mut stats = CompletionStats::empty(spec);
    stats.pred_ratio_mean = mean(&ratios);
    stats.pred_in_band_fraction = if ratios.is_empty() {
        0.0
    } else {
        ratios
            .iter()
            .filter(|r| **r >= AREA_RATIO_BAND.0 && **r <= AREA_RATIO_BAND.1)
            .count() as f64
            / ratios.len() as f64
    };
    stats.pred_histogram = spec.build(&ratios);
    stats.pred_ratios = ratios;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask_gt::MaskEntry;
    use crate::pillar_encoder::GridConfig;

    fn grid() -> GridConfig {
        GridConfig::new(0.0, 3.2, 0.0, 3.2, -1.0, 1.0, 0.16, 32).unwrap()
    }

    fn block(g: GridConfig, r0: usize, c0: usize, h: usize, w: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(g);
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                m.set(r, c, true);
            }
        }
        m
    }

    fn gt_set(g: GridConfig, masks: Vec<BinaryMask>) -> InstanceMaskSet {
        let entries = masks
            .into_iter()
            .enumerate()
            .map(|(i, mask)| MaskEntry {
                instance_id: i as u32,
                class_label: 0,
                mask,
            })
            .collect();
        InstanceMaskSet::new("s", g, entries).unwrap()
    }

    #[test]
    fn single_overlap_above_threshold_is_tp() {
        let g = grid();
        let gt = block(g, 0, 0, 4, 5); // 20 px
        let pred = block(g, 0, 0, 4, 4); // 16 px, IoU 16/20 = 0.8
        let gts = gt_set(g, vec![gt]);
        let outcome = greedy_match(&[(0.9, pred)], &gts, 0.7).unwrap();
        assert!(outcome.records[0].is_tp);
        assert!((outcome.records[0].iou - 0.8).abs() < 1e-12);
    }

    #[test]
    fn one_gt_consumed_once() {
        let g = grid();
        let gt = block(g, 0, 0, 4, 4);
        let gts = gt_set(g, vec![gt.clone()]);
        let preds = vec![(0.5, gt.clone()), (0.9, gt.clone())];
        let outcome = greedy_match(&preds, &gts, 0.5).unwrap();
        // higher score goes first and wins
        assert_eq!(outcome.records[0].score, 0.9);
        assert!(outcome.records[0].is_tp);
        assert!(!outcome.records[1].is_tp);
    }

    /// Exhaustive reference: same greedy contract, written index-first.
    fn reference_match(
        preds: &[(f64, BinaryMask)],
        gts: &InstanceMaskSet,
        threshold: f64,
    ) -> Vec<bool> {
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.sort_by(|&a, &b| preds[b].0.partial_cmp(&preds[a].0).unwrap().then(a.cmp(&b)));
        let mut taken = vec![false; gts.len()];
        let mut flags = Vec::new();
        for idx in order {
            let mut candidates: Vec<(usize, f64)> = gts
                .entries
                .iter()
                .enumerate()
                .filter(|(gi, _)| !taken[*gi])
                .map(|(gi, e)| (gi, mask_iou(&preds[idx].1, &e.mask).unwrap()))
                .collect();
            candidates.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap()
                    .then(gts.entries[a.0].instance_id.cmp(&gts.entries[b.0].instance_id))
            });
            match candidates.first() {
                Some(&(gi, iou)) if iou >= threshold => {
                    taken[gi] = true;
                    flags.push(true);
                }
                _ => flags.push(false),
            }
        }
        flags
    }

    #[test]
    fn greedy_matches_reference_on_random_sets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let g = grid();
        for _ in 0..100 {
            let gts = gt_set(
                g,
                (0..rng.random_range(1..4))
                    .map(|_| {
                        block(
                            g,
                            rng.random_range(0..12),
                            rng.random_range(0..12),
                            rng.random_range(2..6),
                            rng.random_range(2..6),
                        )
                    })
                    .collect(),
            );
            let preds: Vec<(f64, BinaryMask)> = (0..rng.random_range(0..5))
                .map(|_| {
                    (
                        rng.random_range(0.0..1.0),
                        block(
                            g,
                            rng.random_range(0..12),
                            rng.random_range(0..12),
                            rng.random_range(2..6),
                            rng.random_range(2..6),
                        ),
                    )
                })
                .collect();
            let got: Vec<bool> = greedy_match(&preds, &gts, 0.5)
                .unwrap()
                .records
                .iter()
                .map(|r| r.is_tp)
                .collect();
            assert_eq!(got, reference_match(&preds, &gts, 0.5));
        }
    }

    #[test]
    fn ap_single_tp_is_one() {
        for mode in [ApMode::AllPoint, ApMode::ElevenPoint, ApMode::FortyPoint] {
            assert_eq!(average_precision_from_flags(&[true], 1, mode), 1.0);
        }
    }

    #[test]
    fn ap_fp_then_tp_is_half() {
        let ap = average_precision_from_flags(&[false, true], 1, ApMode::AllPoint);
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn ap_tp_then_fp_is_one() {
        let ap = average_precision_from_flags(&[true, false], 1, ApMode::AllPoint);
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn ap_zero_gt_rules() {
        assert_eq!(average_precision_from_flags(&[], 0, ApMode::AllPoint), 1.0);
        assert_eq!(average_precision_from_flags(&[false], 0, ApMode::AllPoint), 0.0);
    }

    #[test]
    fn ap_perfect_detections_is_one_in_every_mode() {
        let flags = vec![true; 5];
        for mode in [ApMode::AllPoint, ApMode::ElevenPoint, ApMode::FortyPoint] {
            assert!((average_precision_from_flags(&flags, 5, mode) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ap_monotone_under_improvement() {
        let flags = vec![false, true, false, true, false];
        let base = average_precision_from_flags(&flags, 4, ApMode::AllPoint);
        for k in 0..flags.len() {
            if !flags[k] {
                let mut improved = flags.clone();
                improved[k] = true;
                let ap = average_precision_from_flags(&improved, 4, ApMode::AllPoint);
                assert!(ap >= base);
            }
        }
    }

    type PredGtMaps = (
        BTreeMap<String, ScoredMasks>,
        BTreeMap<String, InstanceMaskSet>,
    );
    type ScanFixture<'a> = (&'a str, Vec<BinaryMask>, Vec<(f64, BinaryMask)>);

    fn to_maps(g: GridConfig, sets: Vec<ScanFixture>) -> PredGtMaps {
        let mut preds = BTreeMap::new();
        let mut gts = BTreeMap::new();
        for (id, gt_masks, pred_masks) in sets {
            gts.insert(id.to_string(), gt_set(g, gt_masks));
            preds.insert(id.to_string(), pred_masks);
        }
        (preds, gts)
    }

    #[test]
    fn oracle_predictions_score_perfectly() {
        let g = grid();
        let a = block(g, 0, 0, 4, 4);
        let b = block(g, 10, 10, 5, 5);
        let (preds, gts) = to_maps(
            g,
            vec![
                ("000000", vec![a.clone()], vec![(1.0, a)]),
                ("000001", vec![b.clone()], vec![(1.0, b)]),
            ],
        );
        let report = evaluate_dataset(&preds, &gts, &EvalConfig::default()).unwrap();
        assert_eq!(report.ap_at["0.50"], 1.0);
        assert_eq!(report.ap_at["0.70"], 1.0);
        assert_eq!(report.m_ap, 1.0);
        assert_eq!(report.m_iou, 1.0);
        assert_eq!(report.num_tp, 2);
    }

    #[test]
    fn no_predictions_scores_zero() {
        let g = grid();
        let (preds, gts) = to_maps(g, vec![("000000", vec![block(g, 0, 0, 4, 4)], vec![])]);
        let report = evaluate_dataset(&preds, &gts, &EvalConfig::default()).unwrap();
        assert_eq!(report.ap_at["0.50"], 0.0);
        assert_eq!(report.m_ap, 0.0);
        assert_eq!(report.num_pred, 0);
    }

    #[test]
    fn two_scan_fixture_matches_hand_computation() {
        let g = grid();
        let gt_a = block(g, 0, 0, 4, 4);
        let gt_b = block(g, 10, 10, 4, 4);
        // scan one: perfect hit at score 0.9; scan two: one hit at 0.8 and
        // one disjoint false positive at 0.95
        let (preds, gts) = to_maps(
            g,
            vec![
                ("000000", vec![gt_a.clone()], vec![(0.9, gt_a)]),
                (
                    "000001",
                    vec![gt_b.clone()],
                    vec![(0.8, gt_b), (0.95, block(g, 0, 10, 3, 3))],
                ),
            ],
        );
        let report = evaluate_dataset(&preds, &gts, &EvalConfig::default()).unwrap();
        // pooled flags by score: [FP(0.95), TP(0.9), TP(0.8)], 2 GTs
        // envelope precisions at the TPs: 2/3 and 2/3 (max later) → wait:
        // precision after each: 0, 1/2, 2/3; envelope: 2/3, 2/3, 2/3
        // AP = (2/3)·(1/2) + (2/3)·(1/2) = 2/3
        assert!((report.ap_at["0.50"] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.num_tp, 2);
        assert_eq!(report.m_iou, 1.0);
    }

    #[test]
    fn scan_id_mismatch_is_enumerated() {
        let g = grid();
        let mut preds = BTreeMap::new();
        preds.insert("000007".to_string(), vec![]);
        let mut gts = BTreeMap::new();
        gts.insert("000000".to_string(), gt_set(g, vec![block(g, 0, 0, 4, 4)]));
        match evaluate_dataset(&preds, &gts, &EvalConfig::default()) {
            Err(Error::ScanIdMismatch {
                missing_in_preds,
                missing_in_gts,
            }) => {
                assert_eq!(missing_in_preds, vec!["000000".to_string()]);
                assert_eq!(missing_in_gts, vec!["000007".to_string()]);
            }
            other => panic!("expected scan id mismatch, got {other:?}"),
        }
    }

    #[test]
    fn score_shift_leaves_metrics_unchanged() {
        let g = grid();
        let gt = block(g, 0, 0, 4, 4);
        let near = block(g, 0, 0, 4, 3);
        let (preds, gts) = to_maps(
            g,
            vec![(
                "000000",
                vec![gt.clone()],
                vec![(0.6, gt.clone()), (0.3, near.clone())],
            )],
        );
        let report_a = evaluate_dataset(&preds, &gts, &EvalConfig::default()).unwrap();
        let shifted: BTreeMap<String, ScoredMasks> = preds
            .iter()
            .map(|(k, v)| {
                (
                    k.clone(),
                    v.iter().map(|(s, m)| (s + 0.39, m.clone())).collect(),
                )
            })
            .collect();
        let report_b = evaluate_dataset(&shifted, &gts, &EvalConfig::default()).unwrap();
        assert_eq!(report_a.ap_at, report_b.ap_at);
        assert_eq!(report_a.m_iou, report_b.m_iou);
    }

    fn kitti_box(height: f64, occluded: u8, truncated: f64) -> ObjectBox3D {
        ObjectBox3D {
            center: nalgebra::Point3::new(10.0, 0.0, -1.0),
            length: 4.0,
            width: 1.6,
            height: 1.5,
            yaw: 0.0,
            class_name: "Car".into(),
            truncated,
            occluded,
            image_bbox_height: height,
        }
    }

    #[test]
    fn difficulty_thresholds() {
        assert_eq!(difficulty_bucket(&kitti_box(50.0, 0, 0.0)), Difficulty::Easy);
        assert_eq!(
            difficulty_bucket(&kitti_box(30.0, 1, 0.2)),
            Difficulty::Moderate
        );
        assert_eq!(
            difficulty_bucket(&kitti_box(30.0, 2, 0.4)),
            Difficulty::Hard
        );
        assert_eq!(
            difficulty_bucket(&kitti_box(20.0, 0, 0.0)),
            Difficulty::Ignored
        );
    }

    #[test]
    fn harder_buckets_include_easier_gts() {
        let g = grid();
        let easy_mask = block(g, 0, 0, 4, 4);
        let hard_mask = block(g, 10, 10, 4, 4);
        let gts_map: BTreeMap<String, InstanceMaskSet> = [(
            "000000".to_string(),
            gt_set(g, vec![easy_mask.clone(), hard_mask.clone()]),
        )]
        .into();
        let preds: BTreeMap<String, ScoredMasks> = [(
            "000000".to_string(),
            vec![(0.9, easy_mask), (0.8, hard_mask)],
        )]
        .into();
        let difficulty: BTreeMap<String, BTreeMap<u32, Difficulty>> = [(
            "000000".to_string(),
            [(0u32, Difficulty::Easy), (1u32, Difficulty::Hard)].into(),
        )]
        .into();
        let result =
            evaluate_per_difficulty(&preds, &gts_map, &difficulty, 0.7, ApMode::AllPoint).unwrap();
        // Easy bucket: 1 active GT, the hard match is discarded → AP 1
        assert_eq!(result["Easy"], 1.0);
        // Hard bucket: both active and both hit
        assert_eq!(result["Hard"], 1.0);
    }

    #[test]
    fn completion_fully_visible_instance_is_one() {
        let g = grid();
        let mask = block(g, 2, 2, 5, 5);
        let complete: BTreeMap<String, InstanceMaskSet> =
            [("s0".to_string(), gt_set(g, vec![mask.clone()]))].into();
        let single: BTreeMap<String, BTreeMap<u32, BinaryMask>> =
            [("s0".to_string(), [(0u32, mask)].into())].into();
        let stats =
            completion_analysis(&complete, &single, 0, &HistogramSpec::default()).unwrap();
        assert_eq!(stats.best_case_ratios[&0], 1.0);
        assert_eq!(stats.best_case_mean, 1.0);
    }

    #[test]
    fn completion_half_area_fixture() {
        let g = grid();
        let full = block(g, 2, 2, 4, 10);
        let half = block(g, 2, 2, 4, 5);
        let complete: BTreeMap<String, InstanceMaskSet> = [
            ("s0".to_string(), gt_set(g, vec![full.clone()])),
            ("s1".to_string(), gt_set(g, vec![full.clone()])),
        ]
        .into();
        let single: BTreeMap<String, BTreeMap<u32, BinaryMask>> = [
            ("s0".to_string(), [(0u32, half.clone())].into()),
            ("s1".to_string(), [(0u32, half)].into()),
        ]
        .into();
        let stats =
            completion_analysis(&complete, &single, 0, &HistogramSpec::default()).unwrap();
        assert_eq!(stats.best_case_mean, 0.5);
        assert_eq!(stats.all_scan_mean, 0.5);
        assert_eq!(stats.all_scan_std, 0.0);
    }

    #[test]
    fn completion_missing_complete_mask_is_error() {
        let g = grid();
        let complete: BTreeMap<String, InstanceMaskSet> =
            [("s0".to_string(), gt_set(g, vec![]))].into();
        let single: BTreeMap<String, BTreeMap<u32, BinaryMask>> =
            [("s0".to_string(), [(3u32, block(g, 0, 0, 2, 2))].into())].into();
        assert!(completion_analysis(&complete, &single, 0, &HistogramSpec::default()).is_err());
    }

    #[test]
    fn low_area_cutoff_excludes_from_best_case_only() {
        let g = grid();
        let big = block(g, 2, 2, 4, 10);
        let tiny = block(g, 2, 2, 1, 2); // 2 px
        let complete: BTreeMap<String, InstanceMaskSet> =
            [("s0".to_string(), gt_set(g, vec![big.clone()]))].into();
        let single: BTreeMap<String, BTreeMap<u32, BinaryMask>> =
            [("s0".to_string(), [(0u32, tiny)].into())].into();
        let stats = completion_analysis(&complete, &single, 5, &HistogramSpec::default()).unwrap();
        assert_eq!(stats.best_case_mean, 0.0); // excluded
        assert!(stats.best_case_mean_inclusive > 0.0);
        assert_eq!(stats.all_scan_ratios.len(), 1);
    }

    #[test]
    fn prediction_ratio_identity_and_double() {
        let g = grid();
        let gt = block(g, 2, 2, 4, 5); // 20 px
        let double = block(g, 2, 2, 8, 5); // 40 px, contains gt, IoU 0.5
        let gts: BTreeMap<String, InstanceMaskSet> =
            [("s0".to_string(), gt_set(g, vec![gt.clone()]))].into();
        let exact: BTreeMap<String, ScoredMasks> =
            [("s0".to_string(), vec![(1.0, gt.clone())])].into();
        let stats =
            prediction_area_analysis(&exact, &gts, &HistogramSpec::default()).unwrap();
        assert_eq!(stats.pred_ratios, vec![1.0]);
        assert_eq!(stats.pred_in_band_fraction, 1.0);

        let doubled: BTreeMap<String, ScoredMasks> =
            [("s0".to_string(), vec![(1.0, double)])].into();
        let stats =
            prediction_area_analysis(&doubled, &gts, &HistogramSpec::default()).unwrap();
        assert_eq!(stats.pred_ratios, vec![2.0]);
        assert_eq!(stats.pred_in_band_fraction, 0.0);
    }

    #[test]
    fn band_edges_are_inclusive() {
        assert!(0.7 >= AREA_RATIO_BAND.0);
        let edge = 100.0 / 70.0;
        assert!(edge <= AREA_RATIO_BAND.1 && edge >= AREA_RATIO_BAND.0);
        assert!((AREA_RATIO_BAND.1 - 1.4285714285714286).abs() < 1e-12);
    }

    #[test]
    fn ap_threshold_monotonicity() {
        let g = grid();
        let gt = block(g, 0, 0, 4, 5);
        let close = block(g, 0, 0, 4, 4);
        let (preds, gts) = to_maps(g, vec![("s", vec![gt], vec![(0.9, close)])]);
        let make = |t: f64| {
            let config = EvalConfig {
                ap_thresholds: vec![t],
                map_ladder: vec![],
                ..Default::default()
            };
            evaluate_dataset(&preds, &gts, &config).unwrap().ap_at[&threshold_key(t)]
        };
        assert!(make(0.5) >= make(0.7));
        assert!(make(0.7) >= make(0.9));
    }
}
