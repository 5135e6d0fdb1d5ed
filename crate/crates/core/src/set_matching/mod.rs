//! Set-prediction machinery: mask IoU, bipartite matching of queries to
//! ground-truth masks, and the classification + mask training loss with
//! `no_object` handling.

mod hungarian;

pub use hungarian::{assignment_cost, hungarian};
// prediction files share the label schema; re-export their I/O here
pub use crate::mask_gt::{read_scored_mask_set, write_scored_mask_set};

use crate::error::{Error, Result};
use crate::mask_gt::{BinaryMask, InstanceMaskSet};
use crate::pillar_encoder::{BevTensor, GridConfig};

/// Default number of query slots in a set prediction.
pub const DEFAULT_QUERY_COUNT: usize = 45;

/// Class index of the positive (car) class in `class_probs`.
pub const CLASS_CAR: usize = 0;
/// Class index of the `no_object` class.
pub const CLASS_NO_OBJECT: usize = 1;

const LOG_CLAMP: f64 = 1e-12;

/// One query slot: a class probability vector over {car, no_object} and a
/// row-major H·W mask logit raster.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutput {
    pub class_probs: Vec<f64>,
    pub mask_logits: Vec<f64>,
}

/// The set output of a mask detector for one scan: up to M query slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SetPrediction {
    pub queries: Vec<QueryOutput>,
    pub grid: GridConfig,
}

impl SetPrediction {
    /// Validate probability vectors (nonnegative, sum 1 within 1e-6) and
    /// logit rasters (finite, H·W values).
    pub fn new(queries: Vec<QueryOutput>, grid: GridConfig) -> Result<Self> {
        let cells = grid.cell_count();
        for (qi, q) in queries.iter().enumerate() {
            if q.class_probs.len() < 2 {
                return Err(Error::Invalid(format!(
                    "query {qi}: need at least {{car, no_object}} probabilities"
                )));
            }
            let mut sum = 0.0;
            for p in &q.class_probs {
                if !p.is_finite() || *p < 0.0 {
                    return Err(Error::Invalid(format!("query {qi}: bad class probability {p}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Invalid(format!(
                    "query {qi}: class probabilities sum to {sum}"
                )));
            }
            if q.mask_logits.len() != cells {
                return Err(Error::LengthMismatch {
                    expected: cells,
                    actual: q.mask_logits.len(),
                });
            }
            if q.mask_logits.iter().any(|l| !l.is_finite()) {
                return Err(Error::Invalid(format!("query {qi}: non-finite mask logit")));
            }
        }
        Ok(Self { queries, grid })
    }
}

/// Loss term weights; defaults follow the usual mask-classification setup
/// (class 2.0, BCE 5.0, Dice 5.0) with unmatched queries down-weighted by
/// 0.1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_class: f64,
    pub w_bce: f64,
    pub w_dice: f64,
    pub no_object_factor: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_class: 2.0,
            w_bce: 5.0,
            w_dice: 5.0,
            no_object_factor: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.w_class, "w_class"),
            (self.w_bce, "w_bce"),
            (self.w_dice, "w_dice"),
            (self.no_object_factor, "no_object_factor"),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Invalid(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// A one-to-one matching of query slots to ground-truth indices; queries
/// absent from `pairs` are implicitly `no_object`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// (query index, ground-truth index), sorted by query index.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Mean −log p(car) over matched queries.
    pub class_loss: f64,
    /// Mean per-pixel binary cross-entropy over matched pairs.
    pub bce_loss: f64,
    /// Mean Dice loss over matched pairs.
    pub dice_loss: f64,
    /// Mean −log p(no_object) over unmatched queries.
    pub no_object_loss: f64,
    /// Weighted sum of the above.
    pub total: f64,
}

/// Precomputed area and bounding box of a mask, for repeated IoU queries
/// against the same raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskStats {
    pub area: usize,
    /// Inclusive (row_min, col_min, row_max, col_max); `None` when empty.
    pub bbox: Option<(usize, usize, usize, usize)>,
}

impl MaskStats {
    pub fn of(mask: &BinaryMask) -> Self {
        let w = mask.grid.width();
        let mut area = 0usize;
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (i, &v) in mask.raster().iter().enumerate() {
            if !v {
                continue;
            }
            area += 1;
            let (row, col) = (i / w, i % w);
            bbox = Some(match bbox {
                None => (row, col, row, col),
                Some((r0, c0, r1, c1)) => (r0.min(row), c0.min(col), r1.max(row), c1.max(col)),
            });
        }
        Self { area, bbox }
    }
}

/// Intersection-over-union of two footprint masks; 1.0 when both are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    mask_iou_with_stats(a, &MaskStats::of(a), b, &MaskStats::of(b))
}

/// [`mask_iou`] with caller-supplied stats; the intersection is counted
/// over the bounding-box overlap only.
pub fn mask_iou_with_stats(
    a: &BinaryMask,
    a_stats: &MaskStats,
    b: &BinaryMask,
    b_stats: &MaskStats,
) -> Result<f64> {
    if !a.grid.same_raster(&b.grid) {
        return Err(Error::GridMismatch);
    }
    let (abox, bbox) = match (a_stats.bbox, b_stats.bbox) {
        (Some(x), Some(y)) => (x, y),
        (None, None) => return Ok(1.0),
        _ => return Ok(0.0),
    };
    let r0 = abox.0.max(bbox.0);
    let c0 = abox.1.max(bbox.1);
    let r1 = abox.2.min(bbox.2);
    let c1 = abox.3.min(bbox.3);
    let mut inter = 0usize;
    if r0 <= r1 && c0 <= c1 {
        let w = a.grid.width();
        for row in r0..=r1 {
            let lo = row * w + c0;
            let hi = row * w + c1 + 1;
            inter += a.raster()[lo..hi]
                .iter()
                .zip(&b.raster()[lo..hi])
                .filter(|(x, y)| **x && **y)
                .count();
        }
    }
    let union = a_stats.area + b_stats.area - inter;
    Ok(inter as f64 / union as f64)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// [`binarize_with`] keeping every query.
pub fn binarize(pred: &SetPrediction, threshold: f64) -> Result<Vec<(f64, BinaryMask)>> {
    binarize_with(pred, threshold, true)
}

/// Threshold each query's sigmoid mask into a binary footprint, scored by
/// the car-class probability. A pixel is set iff `sigmoid(logit)` is
/// strictly greater than `threshold`, so a logit of exactly 0 stays off at
/// the default 0.5. With `keep_no_object = false`, queries whose argmax
/// class is `no_object` are dropped.
pub fn binarize_with(
    pred: &SetPrediction,
    threshold: f64,
    keep_no_object: bool,
) -> Result<Vec<(f64, BinaryMask)>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    let mut out = Vec::with_capacity(pred.queries.len());
    for q in &pred.queries {
        let score = q.class_probs[CLASS_CAR];
        if !keep_no_object && q.class_probs[CLASS_NO_OBJECT] > score {
            continue;
        }
        let data: Vec<bool> = q.mask_logits.iter().map(|&l| sigmoid(l) > threshold).collect();
        out.push((score, BinaryMask::from_raster(data, pred.grid)?));
    }
    Ok(out)
}

/// Pack the per-query mask logits into a tensor (one channel per query),
/// serializable as a BEVT sidecar next to a prediction file.
pub fn logits_to_tensor(pred: &SetPrediction) -> BevTensor {
    let cells = pred.grid.cell_count();
    let mut data = Vec::with_capacity(pred.queries.len() * cells);
    for q in &pred.queries {
        data.extend(q.mask_logits.iter().map(|l| *l as f32));
    }
    BevTensor::from_data(data, pred.queries.len(), pred.grid).expect("sized per query")
}

/// Rebuild a set prediction from per-query car scores and a logits sidecar
/// tensor (channel q holds query q's logits). Class probabilities become
/// `[score, 1 − score]`; logits carry the f32 precision of the file format.
pub fn prediction_from_scores_and_logits(
    scores: &[f64],
    tensor: &BevTensor,
) -> Result<SetPrediction> {
    if scores.len() != tensor.channels() {
        return Err(Error::LengthMismatch {
            expected: tensor.channels(),
            actual: scores.len(),
        });
    }
    let cells = tensor.grid.cell_count();
    let queries = scores
        .iter()
        .enumerate()
        .map(|(q, &score)| {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Invalid(format!("score {score} outside [0, 1]")));
            }
            let base = q * cells;
            Ok(QueryOutput {
                class_probs: vec![score, 1.0 - score],
                mask_logits: tensor.data()[base..base + cells]
                    .iter()
                    .map(|v| *v as f64)
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SetPrediction::new(queries, tensor.grid)
}

/// How the classification term enters the matching cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassCostMode {
    /// −log p(car), the same term the loss uses (default).
    #[default]
    NegLogProb,
    /// −p(car), as in some set-prediction matchers.
    NegProb,
}

/// Matching cost of assigning `query` to `gt`:
/// `w_class · (−log p(car)) + w_bce · BCE + w_dice · Dice`, with the
/// probability inside the log clamped at 1e-12.
pub fn pair_cost(query: &QueryOutput, gt: &BinaryMask, weights: &LossWeights) -> Result<f64> {
    pair_cost_with(query, gt, weights, ClassCostMode::NegLogProb, 1)
}

/// [`pair_cost`] with a selectable class term and a pixel stride for
/// subsampled mask terms (`stride = 1` evaluates every pixel).
pub fn pair_cost_with(
    query: &QueryOutput,
    gt: &BinaryMask,
    weights: &LossWeights,
    class_mode: ClassCostMode,
    stride: usize,
) -> Result<f64> {
    weights.validate()?;
    let (bce, dice) = mask_terms(query, gt, stride)?;
    let p_car = query.class_probs[CLASS_CAR];
    let class = match class_mode {
        ClassCostMode::NegLogProb => -(p_car.max(LOG_CLAMP)).ln(),
        ClassCostMode::NegProb => -p_car,
    };
    Ok(weights.w_class * class + weights.w_bce * bce + weights.w_dice * dice)
}

/// Mean binary cross-entropy and Dice loss of a query's soft mask against a
/// binary target. Dice uses +1 smoothing in numerator and denominator so
/// the empty/empty case is defined (loss 0 at a saturated match).
fn mask_terms(query: &QueryOutput, gt: &BinaryMask, stride: usize) -> Result<(f64, f64)> {
    if query.mask_logits.len() != gt.raster().len() {
        return Err(Error::GridMismatch);
    }
    if stride == 0 {
        return Err(Error::Invalid("pixel stride must be ≥ 1".into()));
    }
    let mut bce_sum = 0.0;
    let mut n = 0usize;
    let mut inter = 0.0;
    let mut p_sum = 0.0;
    let mut g_sum = 0.0;
    let mut idx = 0;
    while idx < query.mask_logits.len() {
        let p = sigmoid(query.mask_logits[idx]);
        let g = gt.raster()[idx] as u8 as f64;
        let pc = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
        bce_sum -= g * pc.ln() + (1.0 - g) * (1.0 - pc).ln();
        inter += p * g;
        p_sum += p;
        g_sum += g;
        n += 1;
        idx += stride;
    }
    let bce = bce_sum / n as f64;
    let dice = 1.0 - (2.0 * inter + 1.0) / (p_sum + g_sum + 1.0);
    Ok((bce, dice))
}

/// Uniquely assign ground truths to queries by minimizing the summed
/// [`pair_cost`]; queries left unmatched are implicitly `no_object`.
pub fn match_sets(
    pred: &SetPrediction,
    gts: &InstanceMaskSet,
    weights: &LossWeights,
) -> Result<Assignment> {
    if gts.len() > pred.queries.len() {
        return Err(Error::Invalid(format!(
            "{} ground truths exceed {} queries",
            gts.len(),
            pred.queries.len()
        )));
    }
    if !pred.grid.same_raster(&gts.grid) {
        return Err(Error::GridMismatch);
    }
    let cost: Vec<Vec<f64>> = pred
        .queries
        .iter()
        .map(|q| {
            gts.entries
                .iter()
                .map(|e| pair_cost(q, &e.mask, weights))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = hungarian(&cost)?;
    Ok(Assignment { pairs })
}

/// The training loss for one scan under a given assignment.
///
/// Matched queries contribute the class, BCE and Dice terms (averaged over
/// matched pairs); unmatched queries contribute −log p(no_object), averaged
/// and down-weighted by `no_object_factor · w_class` in the total.
pub fn set_loss(
    pred: &SetPrediction,
    gts: &InstanceMaskSet,
    assignment: &Assignment,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let q_count = pred.queries.len();
    let mut matched = vec![false; q_count];
    let mut gt_used = vec![false; gts.len()];
    for &(qi, gi) in &assignment.pairs {
        if qi >= q_count || gi >= gts.len() {
            return Err(Error::Invalid(format!("assignment pair ({qi}, {gi}) out of range")));
        }
        if matched[qi] || gt_used[gi] {
            return Err(Error::Invalid(format!(
                "assignment reuses query {qi} or ground truth {gi}"
            )));
        }
        matched[qi] = true;
        gt_used[gi] = true;
    }

    let mut class_sum = 0.0;
    let mut bce_sum = 0.0;
    let mut dice_sum = 0.0;
    for &(qi, gi) in &assignment.pairs {
        let q = &pred.queries[qi];
        class_sum -= q.class_probs[CLASS_CAR].max(LOG_CLAMP).ln();
        let (bce, dice) = mask_terms(q, &gts.entries[gi].mask, 1)?;
        bce_sum += bce;
        dice_sum += dice;
    }
    let n_matched = assignment.pairs.len();
    let (class_loss, bce_loss, dice_loss) = if n_matched > 0 {
        let n = n_matched as f64;
        (class_sum / n, bce_sum / n, dice_sum / n)
    } else {
        (0.0, 0.0, 0.0)
    };

    let mut no_object_sum = 0.0;
    let mut n_unmatched = 0usize;
    for (qi, q) in pred.queries.iter().enumerate() {
        if !matched[qi] {
            no_object_sum -= q.class_probs[CLASS_NO_OBJECT].max(LOG_CLAMP).ln();
            n_unmatched += 1;
        }
    }
    let no_object_loss = if n_unmatched > 0 {
        no_object_sum / n_unmatched as f64
    } else {
        0.0
    };

    let total = weights.w_class * class_loss
        + weights.w_bce * bce_loss
        + weights.w_dice * dice_loss
        + weights.no_object_factor * weights.w_class * no_object_loss;
    Ok(LossBreakdown {
        class_loss,
        bce_loss,
        dice_loss,
        no_object_loss,
        total,
    })
}
