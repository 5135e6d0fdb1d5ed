//! Seeded training-time augmentations over scans and their labels.
//!
//! Every transform is a pure function of (inputs, parameters, seed); the
//! composition pipeline runs drop → paste → per-instance transform → global
//! rigid → flip → jitter so footprint-collision checks happen before the
//! whole scene moves.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset_io::{wrap_angle, ObjectBox3D, PointCloud, SemanticScan};
use crate::error::{Error, Result};
use crate::mask_gt::{BinaryMask, InstanceMaskSet, MaskEntry};

/// Magnitudes and switches for the augmentation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationConfig {
    /// Fraction of points dropped independently.
    pub drop_fraction: f64,
    /// Mirror the scene across the y axis.
    pub flip_y: bool,
    /// Std-dev of the per-coordinate Gaussian point noise, meters.
    pub point_noise_sigma: f64,
    /// Per-component bound of the global translation, meters.
    pub global_translate_max: f64,
    /// Bound of the global yaw, degrees.
    pub global_rotate_max_deg: f64,
    /// Per-component bound of per-instance translations, meters.
    pub instance_translate_max: f64,
    /// Bound of per-instance yaw, degrees.
    pub instance_rotate_max_deg: f64,
    /// Upper bound on instances pasted from a bank.
    pub paste_max_instances: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            drop_fraction: 0.05,
            flip_y: false,
            point_noise_sigma: 0.2,
            global_translate_max: 0.2,
            global_rotate_max_deg: 2.5,
            instance_translate_max: 0.25,
            instance_rotate_max_deg: 9.0,
            paste_max_instances: 10,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_fraction) {
            return Err(Error::Invalid(format!(
                "drop_fraction {} outside [0, 1]",
                self.drop_fraction
            )));
        }
        for (v, name) in [
            (self.point_noise_sigma, "point_noise_sigma"),
            (self.global_translate_max, "global_translate_max"),
            (self.global_rotate_max_deg, "global_rotate_max_deg"),
            (self.instance_translate_max, "instance_translate_max"),
            (self.instance_rotate_max_deg, "instance_rotate_max_deg"),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Invalid(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// A scan with or without per-point annotations.
#[derive(Debug, Clone, PartialEq)]
pub enum ScanData {
    Cloud(PointCloud),
    Semantic(SemanticScan),
}

impl ScanData {
    pub fn cloud(&self) -> &PointCloud {
        match self {
            ScanData::Cloud(c) => c,
            ScanData::Semantic(s) => &s.cloud,
        }
    }

    pub fn len(&self) -> usize {
        self.cloud().len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud().is_empty()
    }

    fn filter_by_index(&self, keep: impl Fn(usize) -> bool) -> ScanData {
        match self {
            ScanData::Cloud(c) => ScanData::Cloud(c.filter_by_index(keep)),
            ScanData::Semantic(s) => ScanData::Semantic(s.filter_by_index(keep)),
        }
    }

    fn map_points(&self, f: impl FnMut(Point3<f64>) -> Point3<f64>) -> ScanData {
        match self {
            ScanData::Cloud(c) => ScanData::Cloud(c.map_points(f)),
            ScanData::Semantic(s) => ScanData::Semantic(SemanticScan {
                cloud: s.cloud.map_points(f),
                semantic_id: s.semantic_id.clone(),
                instance_id: s.instance_id.clone(),
            }),
        }
    }
}

/// Instance labels accompanying a scan: bounding boxes (instance identity is
/// the box index) or footprint masks.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelSet {
    Boxes(Vec<ObjectBox3D>),
    Masks(InstanceMaskSet),
}

fn stage_seed(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0xA24BAED4963EE407);
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Keep each point independently with probability 1 − `fraction`.
pub fn drop_points(scan: &ScanData, fraction: f64, seed: u64) -> Result<ScanData> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Invalid(format!("drop fraction {fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let keep: Vec<bool> = (0..scan.len()).map(|_| rng.random::<f64>() >= fraction).collect();
    Ok(scan.filter_by_index(|i| keep[i]))
}

/// Add iid Gaussian noise with std-dev `sigma` to every coordinate.
pub fn jitter_points(scan: &ScanData, sigma: f64, seed: u64) -> Result<ScanData> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::Invalid(format!("sigma must be ≥ 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(scan.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let noise: Vec<Vector3<f64>> = (0..scan.len())
        .map(|_| {
            Vector3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            )
        })
        .collect();
    let mut i = 0;
    Ok(scan.map_points(|p| {
        let q = Point3::from(p.coords + noise[i]);
        // map_points visits points in index order
        i += 1;
        q
    }))
}

/// Mirror scan and labels across the y axis (left–right swap).
///
/// Mask labels need symmetric grid y bounds, otherwise the mirrored raster
/// would not live on the same grid.
pub fn flip_y(scan: &ScanData, labels: &LabelSet) -> Result<(ScanData, LabelSet)> {
    let flipped_scan = scan.map_points(|p| Point3::new(p.x, -p.y, p.z));
    let flipped_labels = match labels {
        LabelSet::Boxes(boxes) => LabelSet::Boxes(
            boxes
                .iter()
                .map(|b| {
                    let mut out = b.clone();
                    out.center.y = -out.center.y;
                    out.yaw = wrap_angle(-out.yaw);
                    out
                })
                .collect(),
        ),
        LabelSet::Masks(set) => {
            let grid = set.grid;
            if (grid.y_min + grid.y_max).abs() > 1e-9 {
                return Err(Error::Invalid(
                    "flip_y over mask labels needs symmetric grid y bounds".into(),
                ));
            }
            let h = grid.height();
            let entries = set
                .entries
                .iter()
                .map(|e| {
                    let mut mask = BinaryMask::empty(grid);
                    for (row, col) in e.mask.set_pixels() {
                        mask.set(h - 1 - row, col, true);
                    }
                    MaskEntry {
                        instance_id: e.instance_id,
                        class_label: e.class_label,
                        mask,
                    }
                })
                .collect();
            LabelSet::Masks(InstanceMaskSet::new(set.scan_id.clone(), grid, entries)?)
        }
    };
    Ok((flipped_scan, flipped_labels))
}

fn rotate_xy(p: Point3<f64>, cos: f64, sin: f64) -> Point3<f64> {
    Point3::new(cos * p.x - sin * p.y, sin * p.x + cos * p.y, p.z)
}

/// Remap a mask raster under a world-plane transform with nearest-cell
/// assignment; pixels leaving the grid are dropped.
fn remap_mask(mask: &BinaryMask, f: impl Fn(f64, f64) -> (f64, f64)) -> BinaryMask {
    let grid = mask.grid;
    let mut out = BinaryMask::empty(grid);
    for (row, col) in mask.set_pixels() {
        let (x, y) = grid.pixel_to_world(col, row);
        let (nx, ny) = f(x, y);
        if let Some((ncol, nrow)) = grid.world_to_pixel(nx, ny) {
            out.set(nrow, ncol, true);
        }
    }
    out
}

/// Apply a fixed rotation about the vertical axis followed by a fixed
/// translation to the scan and its labels (the deterministic core of
/// [`global_rigid`]).
///
/// Mask labels are remapped cell-by-cell; entries whose raster leaves the
/// grid entirely are dropped.
pub fn apply_rigid(
    scan: &ScanData,
    labels: &LabelSet,
    yaw: f64,
    translation: Vector3<f64>,
) -> Result<(ScanData, LabelSet)> {
    let (cos, sin) = (yaw.cos(), yaw.sin());
    let moved_scan = scan.map_points(|p| Point3::from(rotate_xy(p, cos, sin).coords + translation));
    let moved_labels = match labels {
        LabelSet::Boxes(boxes) => LabelSet::Boxes(
            boxes
                .iter()
                .map(|b| {
                    let mut out = b.clone();
                    out.center =
                        Point3::from(rotate_xy(b.center, cos, sin).coords + translation);
                    out.yaw = wrap_angle(b.yaw + yaw);
                    out
                })
                .collect(),
        ),
        LabelSet::Masks(set) => {
            let entries: Vec<MaskEntry> = set
                .entries
                .iter()
                .filter_map(|e| {
                    let mask = remap_mask(&e.mask, |x, y| {
                        (
                            cos * x - sin * y + translation.x,
                            sin * x + cos * y + translation.y,
                        )
                    });
                    if mask.is_empty() {
                        None
                    } else {
                        Some(MaskEntry {
                            instance_id: e.instance_id,
                            class_label: e.class_label,
                            mask,
                        })
                    }
                })
                .collect();
            LabelSet::Masks(InstanceMaskSet::new(set.scan_id.clone(), set.grid, entries)?)
        }
    };
    Ok((moved_scan, moved_labels))
}

/// Rotate then translate the whole scene by seeded draws: yaw uniform in
/// ±`rotate_max_deg`, each translation component uniform in
/// ±`translate_max`.
pub fn global_rigid(
    scan: &ScanData,
    labels: &LabelSet,
    translate_max: f64,
    rotate_max_deg: f64,
    seed: u64,
) -> Result<(ScanData, LabelSet)> {
    if translate_max.is_nan() || translate_max < 0.0 || rotate_max_deg.is_nan() || rotate_max_deg < 0.0 {
        return Err(Error::Invalid("rigid bounds must be ≥ 0".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let r = rotate_max_deg.to_radians();
    let yaw = rng.random_range(-r..=r);
    let translation = Vector3::new(
        rng.random_range(-translate_max..=translate_max),
        rng.random_range(-translate_max..=translate_max),
        rng.random_range(-translate_max..=translate_max),
    );
    apply_rigid(scan, labels, yaw, translation)
}

/// Ground-plane corners of a box footprint.
fn box_corners(b: &ObjectBox3D) -> [(f64, f64); 4] {
    let (cos, sin) = (b.yaw.cos(), b.yaw.sin());
    let (hl, hw) = (b.length / 2.0, b.width / 2.0);
    let mut corners = [(0.0, 0.0); 4];
    for (k, (du, dv)) in [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].iter().enumerate() {
        corners[k] = (
            b.center.x + cos * du - sin * dv,
            b.center.y + sin * du + cos * dv,
        );
    }
    corners
}

/// Separating-axis test for two rotated rectangle footprints; touching
/// counts as intersecting.
fn rects_intersect(a: &ObjectBox3D, b: &ObjectBox3D) -> bool {
    let ca = box_corners(a);
    let cb = box_corners(b);
    let mut axes = Vec::with_capacity(4);
    for b in [a, b] {
        axes.push((b.yaw.cos(), b.yaw.sin()));
        axes.push((-b.yaw.sin(), b.yaw.cos()));
    }
    for (ax, ay) in axes {
        let project = |corners: &[(f64, f64); 4]| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (x, y) in corners {
                let d = ax * x + ay * y;
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (lo, hi)
        };
        let (alo, ahi) = project(&ca);
        let (blo, bhi) = project(&cb);
        if ahi < blo || bhi < alo {
            return false;
        }
    }
    true
}

/// Whether a point belongs to a box (footprint and height, inclusive).
fn point_in_box(b: &ObjectBox3D, p: &Point3<f64>) -> bool {
    if (p.z - b.center.z).abs() > b.height / 2.0 {
        return false;
    }
    let (cos, sin) = (b.yaw.cos(), b.yaw.sin());
    let dx = p.x - b.center.x;
    let dy = p.y - b.center.y;
    let u = cos * dx + sin * dy;
    let v = -sin * dx + cos * dy;
    u.abs() <= b.length / 2.0 && v.abs() <= b.width / 2.0
}

fn instance_point_indices(scan: &ScanData, labels: &LabelSet, instance: u32) -> Result<Vec<usize>> {
    match (scan, labels) {
        (ScanData::Semantic(s), LabelSet::Masks(_)) => Ok((0..s.len())
            .filter(|&i| s.instance_id[i] as u32 == instance)
            .collect()),
        (_, LabelSet::Boxes(boxes)) => {
            let b = boxes.get(instance as usize).ok_or_else(|| {
                Error::Invalid(format!("unknown instance id {instance}"))
            })?;
            let points = scan.cloud().points();
            Ok((0..points.len()).filter(|&i| point_in_box(b, &points[i])).collect())
        }
        (ScanData::Cloud(_), LabelSet::Masks(_)) => Err(Error::Invalid(
            "per-instance ops over mask labels need per-point instance annotations".into(),
        )),
    }
}

/// Deterministic core of [`transform_instance`]: rotate the instance by
/// `yaw` about its footprint centroid, then translate by `delta`. When the
/// moved footprint would overlap another instance's footprint (or leave the
/// grid entirely, for masks), the move is rejected and the inputs are
/// returned unchanged.
pub fn transform_instance_with(
    scan: &ScanData,
    labels: &LabelSet,
    instance: u32,
    yaw: f64,
    delta: (f64, f64),
) -> Result<(ScanData, LabelSet)> {
    let indices = instance_point_indices(scan, labels, instance)?;
    let (cos, sin) = (yaw.cos(), yaw.sin());

    match labels {
        LabelSet::Boxes(boxes) => {
            let b = &boxes[instance as usize];
            let (cx, cy) = (b.center.x, b.center.y);
            let mut moved = b.clone();
            moved.center = Point3::new(cx + delta.0, cy + delta.1, b.center.z);
            moved.yaw = wrap_angle(b.yaw + yaw);
            let collides = boxes
                .iter()
                .enumerate()
                .any(|(k, other)| k != instance as usize && rects_intersect(&moved, other));
            if collides {
                return Ok((scan.clone(), labels.clone()));
            }
            let move_point = |p: Point3<f64>| {
                let rel = Point3::new(p.x - cx, p.y - cy, p.z);
                let rot = rotate_xy(rel, cos, sin);
                Point3::new(rot.x + cx + delta.0, rot.y + cy + delta.1, p.z)
            };
            let index_set: std::collections::BTreeSet<usize> = indices.into_iter().collect();
            let mut i = 0usize;
            let moved_scan = scan.map_points(|p| {
                let q = if index_set.contains(&i) { move_point(p) } else { p };
                i += 1;
                q
            });
            let mut new_boxes = boxes.clone();
            new_boxes[instance as usize] = moved;
            Ok((moved_scan, LabelSet::Boxes(new_boxes)))
        }
        LabelSet::Masks(set) => {
            let entry = set
                .entries
                .iter()
                .find(|e| e.instance_id == instance)
                .ok_or_else(|| Error::Invalid(format!("unknown instance id {instance}")))?;
            let (cx, cy) = entry.mask.centroid_world().expect("label masks are nonempty");
            let moved_mask = remap_mask(&entry.mask, |x, y| {
                let (dx, dy) = (x - cx, y - cy);
                (
                    cos * dx - sin * dy + cx + delta.0,
                    sin * dx + cos * dy + cy + delta.1,
                )
            });
            let collides = moved_mask.is_empty()
                || set
                    .entries
                    .iter()
                    .any(|e| e.instance_id != instance && moved_mask.intersects(&e.mask));
            if collides {
                return Ok((scan.clone(), labels.clone()));
            }
            let index_set: std::collections::BTreeSet<usize> = indices.into_iter().collect();
            let mut i = 0usize;
            let moved_scan = scan.map_points(|p| {
                let q = if index_set.contains(&i) {
                    let rel = Point3::new(p.x - cx, p.y - cy, p.z);
                    let rot = rotate_xy(rel, cos, sin);
                    Point3::new(rot.x + cx + delta.0, rot.y + cy + delta.1, p.z)
                } else {
                    p
                };
                i += 1;
                q
            });
            let entries = set
                .entries
                .iter()
                .map(|e| {
                    if e.instance_id == instance {
                        MaskEntry {
                            instance_id: e.instance_id,
                            class_label: e.class_label,
                            mask: moved_mask.clone(),
                        }
                    } else {
                        e.clone()
                    }
                })
                .collect();
            Ok((
                moved_scan,
                LabelSet::Masks(InstanceMaskSet::new(set.scan_id.clone(), set.grid, entries)?),
            ))
        }
    }
}

/// Randomly rotate and translate one instance, rejecting moves that collide
/// with another instance's footprint.
pub fn transform_instance(
    scan: &ScanData,
    labels: &LabelSet,
    instance: u32,
    translate_max: f64,
    rotate_max_deg: f64,
    seed: u64,
) -> Result<(ScanData, LabelSet)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let r = rotate_max_deg.to_radians();
    let yaw = rng.random_range(-r..=r);
    let delta = (
        rng.random_range(-translate_max..=translate_max),
        rng.random_range(-translate_max..=translate_max),
    );
    transform_instance_with(scan, labels, instance, yaw, delta)
}

/// A harvested instance: its points (source-scan frame) and its footprint
/// label, ready to paste into other scans.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub cloud: PointCloud,
    /// Semantic class code given to the pasted points.
    pub semantic_id: u16,
    pub label: BankLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BankLabel {
    Box(ObjectBox3D),
    Mask(BinaryMask),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceBank {
    pub entries: Vec<BankEntry>,
}

impl InstanceBank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Harvest every instance of the given semantic classes from an
    /// annotated scan; the label is the instance's occupancy footprint.
    pub fn harvest_semantic(
        scan: &SemanticScan,
        grid: &crate::pillar_encoder::GridConfig,
        vehicle_classes: &std::collections::BTreeSet<u16>,
    ) -> Self {
        let mut ids: Vec<u32> = scan
            .instance_id
            .iter()
            .zip(&scan.semantic_id)
            .filter(|(i, s)| **i != 0 && vehicle_classes.contains(s))
            .map(|(i, _)| *i as u32)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let mut entries = Vec::new();
        for id in ids {
            let sub = scan.filter_by_index(|i| scan.instance_id[i] as u32 == id);
            let mask = crate::mask_gt::occupancy_mask(sub.cloud.points(), grid);
            if mask.is_empty() {
                continue;
            }
            entries.push(BankEntry {
                semantic_id: sub.semantic_id[0],
                cloud: sub.cloud,
                label: BankLabel::Mask(mask),
            });
        }
        Self { entries }
    }

    /// Harvest the points inside each box of a box-labeled scan.
    pub fn harvest_boxes(cloud: &PointCloud, boxes: &[ObjectBox3D]) -> Self {
        let entries = boxes
            .iter()
            .filter_map(|b| {
                let points = cloud.points();
                let sub = cloud.filter_by_index(|i| point_in_box(b, &points[i]));
                if sub.is_empty() {
                    None
                } else {
                    Some(BankEntry {
                        cloud: sub,
                        semantic_id: 10,
                        label: BankLabel::Box(b.clone()),
                    })
                }
            })
            .collect();
        Self { entries }
    }
}

fn bank_footprint_collides(label: &BankLabel, labels: &LabelSet, accepted: &[BankLabel]) -> Result<bool> {
    match (label, labels) {
        (BankLabel::Box(b), LabelSet::Boxes(boxes)) => {
            if boxes.iter().any(|other| rects_intersect(b, other)) {
                return Ok(true);
            }
            for prior in accepted {
                if let BankLabel::Box(p) = prior {
                    if rects_intersect(b, p) {
                        return Ok(true);
                    }
                }
            }
            Ok(false)
        }
        (BankLabel::Mask(m), LabelSet::Masks(set)) => {
            if !m.grid.same_raster(&set.grid) {
                return Err(Error::GridMismatch);
            }
            if set.entries.iter().any(|e| m.intersects(&e.mask)) {
                return Ok(true);
            }
            for prior in accepted {
                if let BankLabel::Mask(p) = prior {
                    if m.intersects(p) {
                        return Ok(true);
                    }
                }
            }
            Ok(false)
        }
        _ => Err(Error::Invalid(
            "bank label kind does not match the scan's label kind".into(),
        )),
    }
}

/// Paste up to `max_count` bank instances at their original locations,
/// skipping any whose footprint intersects an existing or already pasted
/// footprint. Labels are extended with fresh instance ids.
pub fn paste_instances(
    scan: &ScanData,
    labels: &LabelSet,
    bank: &InstanceBank,
    max_count: usize,
    seed: u64,
) -> Result<(ScanData, LabelSet)> {
    if bank.is_empty() || max_count == 0 {
        return Ok((scan.clone(), labels.clone()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let k = max_count.min(bank.len());
    let chosen = rand::seq::index::sample(&mut rng, bank.len(), k);

    let mut accepted: Vec<&BankEntry> = Vec::new();
    let mut accepted_labels: Vec<BankLabel> = Vec::new();
    for idx in chosen.iter() {
        let entry = &bank.entries[idx];
        if matches!(&entry.label, BankLabel::Mask(m) if m.is_empty()) {
            continue;
        }
        if bank_footprint_collides(&entry.label, labels, &accepted_labels)? {
            continue;
        }
        accepted.push(entry);
        accepted_labels.push(entry.label.clone());
    }
    if accepted.is_empty() {
        return Ok((scan.clone(), labels.clone()));
    }

    match labels {
        LabelSet::Boxes(boxes) => {
            let mut cloud = scan.cloud().clone();
            let mut new_boxes = boxes.clone();
            for entry in &accepted {
                cloud = cloud.concat(&entry.cloud);
                match &entry.label {
                    BankLabel::Box(b) => new_boxes.push(b.clone()),
                    BankLabel::Mask(_) => unreachable!("kind checked above"),
                }
            }
            let scan_out = match scan {
                ScanData::Cloud(_) => ScanData::Cloud(cloud),
                ScanData::Semantic(s) => {
                    let mut semantic = s.semantic_id.clone();
                    let mut instance = s.instance_id.clone();
                    let first_free = s.instance_id.iter().copied().max().unwrap_or(0) as u32 + 1;
                    for (offset, entry) in accepted.iter().enumerate() {
                        let id16 = u16::try_from(first_free + offset as u32)
                            .map_err(|_| Error::Invalid("instance id space exhausted".into()))?;
                        semantic
                            .extend(std::iter::repeat_n(entry.semantic_id, entry.cloud.len()));
                        instance.extend(std::iter::repeat_n(id16, entry.cloud.len()));
                    }
                    ScanData::Semantic(SemanticScan::new(cloud, semantic, instance)?)
                }
            };
            Ok((scan_out, LabelSet::Boxes(new_boxes)))
        }
        LabelSet::Masks(set) => {
            let semantic_scan = match scan {
                ScanData::Semantic(s) => s,
                ScanData::Cloud(_) => {
                    return Err(Error::Invalid(
                        "pasting mask-labeled instances needs per-point annotations".into(),
                    ))
                }
            };
            let first_free = set
                .entries
                .iter()
                .map(|e| e.instance_id)
                .chain(semantic_scan.instance_id.iter().map(|i| *i as u32))
                .max()
                .unwrap_or(0)
                + 1;
            let mut cloud = semantic_scan.cloud.clone();
            let mut semantic = semantic_scan.semantic_id.clone();
            let mut instance = semantic_scan.instance_id.clone();
            let mut entries = set.entries.clone();
            for (offset, entry) in accepted.iter().enumerate() {
                let id = first_free + offset as u32;
                let id16 = u16::try_from(id)
                    .map_err(|_| Error::Invalid("instance id space exhausted".into()))?;
                cloud = cloud.concat(&entry.cloud);
                semantic.extend(std::iter::repeat_n(entry.semantic_id, entry.cloud.len()));
                instance.extend(std::iter::repeat_n(id16, entry.cloud.len()));
                match &entry.label {
                    BankLabel::Mask(m) => entries.push(MaskEntry {
                        instance_id: id,
                        class_label: 0,
                        mask: m.clone(),
                    }),
                    BankLabel::Box(_) => unreachable!("kind checked above"),
                }
            }
            let scan_out = ScanData::Semantic(SemanticScan::new(cloud, semantic, instance)?);
            let labels_out = LabelSet::Masks(InstanceMaskSet::new(
                set.scan_id.clone(),
                set.grid,
                entries,
            )?);
            Ok((scan_out, labels_out))
        }
    }
}

const SALT_DROP: u64 = 1;
const SALT_PASTE: u64 = 2;
const SALT_INSTANCE: u64 = 3;
const SALT_GLOBAL: u64 = 4;
const SALT_JITTER: u64 = 5;

/// Run the configured pipeline: drop → paste → per-instance transform →
/// global rigid → flip → jitter. Stages with zero magnitude (or without a
/// bank) are skipped and leave the data untouched.
pub fn augment_scan(
    scan: &ScanData,
    labels: &LabelSet,
    bank: Option<&InstanceBank>,
    config: &AugmentationConfig,
) -> Result<(ScanData, LabelSet)> {
    config.validate()?;
    let mut scan = scan.clone();
    let mut labels = labels.clone();

    if config.drop_fraction > 0.0 {
        scan = drop_points(&scan, config.drop_fraction, stage_seed(config.seed, SALT_DROP))?;
    }
    if let Some(bank) = bank {
        if config.paste_max_instances > 0 {
            (scan, labels) = paste_instances(
                &scan,
                &labels,
                bank,
                config.paste_max_instances,
                stage_seed(config.seed, SALT_PASTE),
            )?;
        }
    }
    if config.instance_translate_max > 0.0 || config.instance_rotate_max_deg > 0.0 {
        let ids: Vec<u32> = match &labels {
            LabelSet::Boxes(boxes) => (0..boxes.len() as u32).collect(),
            LabelSet::Masks(set) => set.entries.iter().map(|e| e.instance_id).collect(),
        };
        for id in ids {
            (scan, labels) = transform_instance(
                &scan,
                &labels,
                id,
                config.instance_translate_max,
                config.instance_rotate_max_deg,
                stage_seed(config.seed, SALT_INSTANCE ^ ((id as u64) << 8)),
            )?;
        }
    }
    if config.global_translate_max > 0.0 || config.global_rotate_max_deg > 0.0 {
        (scan, labels) = global_rigid(
            &scan,
            &labels,
            config.global_translate_max,
            config.global_rotate_max_deg,
            stage_seed(config.seed, SALT_GLOBAL),
        )?;
    }
    if config.flip_y {
        (scan, labels) = flip_y(&scan, &labels)?;
    }
    if config.point_noise_sigma > 0.0 {
        scan = jitter_points(
            &scan,
            config.point_noise_sigma,
            stage_seed(config.seed, SALT_JITTER),
        )?;
    }
    Ok((scan, labels))
}
