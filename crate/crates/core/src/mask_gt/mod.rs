//! Complete BEV instance-footprint mask labels.
//!
//! Two label sources are supported: orthogonal projections of 3D bounding
//! boxes onto the ground plane, and occupancy rasters of per-point instance
//! annotations aggregated over a scan sequence so that footprints are
//! complete even where a single scan only sees the sensor-facing side.

mod morphology;
mod rle;

pub use morphology::{close, dilate, erode, morphology, open, MorphOp};
pub use rle::{
    read_mask_set, read_scored_mask_set, rle_decode, rle_encode, write_mask_set,
    write_scored_mask_set,
};

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Point3;

use crate::dataset_io::{ObjectBox3D, Pose, SemanticScan};
use crate::error::{Error, Result};
use crate::pillar_encoder::GridConfig;

/// Default minimum footprint area in pixels (≈ 1.02 m² at 0.16 m voxels).
pub const DEFAULT_MIN_AREA_PIXELS: usize = 40;

/// An H×W boolean footprint raster tied to a grid.
///
/// Equality compares the raster geometry (x/y bounds, voxel size) and the
/// pixels; the grid's z range and sampling limit play no role in a raster.
#[derive(Debug, Clone)]
pub struct BinaryMask {
    data: Vec<bool>,
    pub grid: GridConfig,
}

impl PartialEq for BinaryMask {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_raster(&other.grid) && self.data == other.data
    }
}

impl BinaryMask {
    pub fn empty(grid: GridConfig) -> Self {
        Self {
            data: vec![false; grid.cell_count()],
            grid,
        }
    }

    pub fn from_raster(data: Vec<bool>, grid: GridConfig) -> Result<Self> {
        if data.len() != grid.cell_count() {
            return Err(Error::LengthMismatch {
                expected: grid.cell_count(),
                actual: data.len(),
            });
        }
        Ok(Self { data, grid })
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.grid.width() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.grid.width() + col] = value;
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|v| *v)
    }

    /// Row-major flattened raster.
    pub fn raster(&self) -> &[bool] {
        &self.data
    }

    /// Iterate over set pixels as (row, col).
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.grid.width();
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn intersects(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).any(|(a, b)| *a && *b)
    }

    /// Inclusive (row_min, col_min, row_max, col_max) of the set pixels;
    /// `None` when empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let w = self.grid.width();
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            if !v {
                continue;
            }
            let (row, col) = (i / w, i % w);
            bbox = Some(match bbox {
                None => (row, col, row, col),
                Some((r0, c0, r1, c1)) => (r0.min(row), c0.min(col), r1.max(row), c1.max(col)),
            });
        }
        bbox
    }

    /// Mean of set-pixel centers in world coordinates; `None` when empty.
    pub fn centroid_world(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for (row, col) in self.set_pixels() {
            let (x, y) = self.grid.pixel_to_world(col, row);
            sx += x;
            sy += y;
            n += 1;
        }
        if n == 0 {
            None
        } else {
            Some((sx / n as f64, sy / n as f64))
        }
    }
}

/// One labeled instance: id, class (0 = car) and its footprint mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEntry {
    pub instance_id: u32,
    pub class_label: u16,
    pub mask: BinaryMask,
}

/// The per-scan set of instance footprint masks.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMaskSet {
    pub scan_id: String,
    pub entries: Vec<MaskEntry>,
    pub grid: GridConfig,
}

impl InstanceMaskSet {
    /// Validate: unique instance ids, nonempty masks, rasters on `grid`.
    pub fn new(scan_id: impl Into<String>, grid: GridConfig, entries: Vec<MaskEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.instance_id) {
                return Err(Error::Invalid(format!(
                    "duplicate instance id {}",
                    e.instance_id
                )));
            }
            if e.mask.is_empty() {
                return Err(Error::Invalid(format!(
                    "instance {} has an empty mask",
                    e.instance_id
                )));
            }
            if !e.mask.grid.same_raster(&grid) {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self {
            scan_id: scan_id.into(),
            entries,
            grid,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, instance_id: u32) -> Option<&MaskEntry> {
        self.entries.iter().find(|e| e.instance_id == instance_id)
    }
}

/// Mask generation knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskGenParams {
    /// Closing structuring-element size in pixels, odd.
    pub closing_kernel: usize,
    /// Opening structuring-element size in pixels, odd.
    pub opening_kernel: usize,
    /// Masks below this area are dropped from generated label sets.
    pub min_area_pixels: usize,
    /// Keep a mask only when the instance has at least one point of the
    /// target scan inside the grid region.
    pub presence_filter: bool,
}

impl Default for MaskGenParams {
    fn default() -> Self {
        Self {
            closing_kernel: 3,
            opening_kernel: 3,
            min_area_pixels: DEFAULT_MIN_AREA_PIXELS,
            presence_filter: true,
        }
    }
}

impl MaskGenParams {
    pub fn validate(&self) -> Result<()> {
        for (k, name) in [
            (self.closing_kernel, "closing_kernel"),
            (self.opening_kernel, "opening_kernel"),
        ] {
            if k < 1 || k.is_multiple_of(2) {
                return Err(Error::Invalid(format!("{name} must be odd and ≥ 1, got {k}")));
            }
        }
        Ok(())
    }
}

/// World-frame point sets accumulated per instance over a sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregatedInstanceMap {
    instances: BTreeMap<u32, InstanceAggregate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAggregate {
    pub points: Vec<Point3<f64>>,
    /// Number of scans that contributed at least one point.
    pub scan_count: u32,
}

impl AggregatedInstanceMap {
    pub fn instances(&self) -> &BTreeMap<u32, InstanceAggregate> {
        &self.instances
    }

    pub fn instance_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.instances.keys().copied()
    }

    pub fn get(&self, instance_id: u32) -> Option<&InstanceAggregate> {
        self.instances.get(&instance_id)
    }

    /// Fold `other` into `self`, appending points per instance. Folding
    /// per-scan partial maps in scan order reproduces the sequential result.
    pub fn merge(&mut self, other: AggregatedInstanceMap) {
        for (id, agg) in other.instances {
            match self.instances.get_mut(&id) {
                Some(existing) => {
                    existing.points.extend(agg.points);
                    existing.scan_count += agg.scan_count;
                }
                None => {
                    self.instances.insert(id, agg);
                }
            }
        }
    }
}

/// Rasterize the ground-plane footprint of a box: a pixel is set iff its
/// cell center lies inside (boundary-inclusive) the yaw-rotated
/// length×width rectangle centered on the box.
pub fn rasterize_box_footprint(object: &ObjectBox3D, grid: &GridConfig) -> BinaryMask {
    let mut mask = BinaryMask::empty(*grid);
    let (cx, cy) = (object.center.x, object.center.y);
    let (cos, sin) = (object.yaw.cos(), object.yaw.sin());
    let (half_l, half_w) = (object.length / 2.0, object.width / 2.0);

    // scan only the cells under the rectangle's bounding circle
    let radius = (half_l * half_l + half_w * half_w).sqrt();
    let v = grid.voxel_size;
    let col_lo = (((cx - radius) - grid.x_min) / v).floor().max(0.0) as usize;
    let row_lo = (((cy - radius) - grid.y_min) / v).floor().max(0.0) as usize;
    let col_hi = ((((cx + radius) - grid.x_min) / v).ceil() as isize)
        .clamp(0, grid.width() as isize) as usize;
    let row_hi = ((((cy + radius) - grid.y_min) / v).ceil() as isize)
        .clamp(0, grid.height() as isize) as usize;

    for row in row_lo..row_hi {
        for col in col_lo..col_hi {
            let (x, y) = grid.pixel_to_world(col, row);
            let dx = x - cx;
            let dy = y - cy;
            let u = cos * dx + sin * dy;
            let w = -sin * dx + cos * dy;
            if u.abs() <= half_l && w.abs() <= half_w {
                mask.set(row, col, true);
            }
        }
    }
    mask
}

/// Box-derived label set: one entry per box whose rasterized footprint
/// reaches the area threshold; the instance id is the box index. Box
/// rasters have no holes, so no morphology is applied.
pub fn generate_masks_from_boxes(
    scan_id: &str,
    boxes: &[ObjectBox3D],
    grid: &GridConfig,
    params: &MaskGenParams,
) -> Result<InstanceMaskSet> {
    params.validate()?;
    let mut entries = Vec::new();
    for (i, object) in boxes.iter().enumerate() {
        let mask = rasterize_box_footprint(object, grid);
        let area = mask.area();
        if area == 0 || area < params.min_area_pixels {
            continue;
        }
        entries.push(MaskEntry {
            instance_id: i as u32,
            class_label: 0,
            mask,
        });
    }
    InstanceMaskSet::new(scan_id, *grid, entries)
}

/// Accumulate world-frame vehicle points per instance over a sequence.
///
/// Points with `semantic_id ∈ vehicle_classes` and a nonzero instance id are
/// transformed by their scan's pose and appended under the instance id;
/// instance ids are trusted to be consistent across the sequence.
pub fn aggregate_instances(
    scans: &[SemanticScan],
    poses: &[Pose],
    vehicle_classes: &BTreeSet<u16>,
) -> Result<AggregatedInstanceMap> {
    if scans.len() != poses.len() {
        return Err(Error::LengthMismatch {
            expected: scans.len(),
            actual: poses.len(),
        });
    }
    let mut map = AggregatedInstanceMap::default();
    for (scan, pose) in scans.iter().zip(poses) {
        map.merge(aggregate_single_scan(scan, pose, vehicle_classes));
    }
    Ok(map)
}

/// The single-scan contribution to [`aggregate_instances`]; scans may be
/// processed in parallel and the partial maps merged in scan order.
pub fn aggregate_single_scan(
    scan: &SemanticScan,
    pose: &Pose,
    vehicle_classes: &BTreeSet<u16>,
) -> AggregatedInstanceMap {
    let mut instances: BTreeMap<u32, InstanceAggregate> = BTreeMap::new();
    for (i, p) in scan.cloud.points().iter().enumerate() {
        if scan.instance_id[i] == 0 || !vehicle_classes.contains(&scan.semantic_id[i]) {
            continue;
        }
        let id = scan.instance_id[i] as u32;
        instances
            .entry(id)
            .or_insert_with(|| InstanceAggregate {
                points: Vec::new(),
                scan_count: 1,
            })
            .points
            .push(pose.apply(*p));
    }
    AggregatedInstanceMap { instances }
}

/// Occupancy raster: a pixel is set iff at least one point falls in the
/// cell (respecting the grid z range).
pub fn occupancy_mask<'a>(
    points: impl IntoIterator<Item = &'a Point3<f64>>,
    grid: &GridConfig,
) -> BinaryMask {
    let mut mask = BinaryMask::empty(*grid);
    for p in points {
        if p.z < grid.z_min || p.z >= grid.z_max {
            continue;
        }
        if let Some((col, row)) = grid.world_to_pixel(p.x, p.y) {
            mask.set(row, col, true);
        }
    }
    mask
}

fn clean_occupancy(mask: BinaryMask, params: &MaskGenParams) -> BinaryMask {
    let closed = close(&mask, params.closing_kernel);
    open(&closed, params.opening_kernel)
}

/// Complete mask labels for one scan, generated from the aggregated map at
/// that scan's pose.
///
/// Per instance: transform the world-frame points into the scan frame,
/// rasterize occupancy, apply closing then opening, drop below the area
/// threshold, and (when enabled) drop instances without a point of the
/// target scan inside the grid.
pub fn generate_masks_from_instances(
    scan_id: &str,
    map: &AggregatedInstanceMap,
    scan: &SemanticScan,
    scan_pose: &Pose,
    grid: &GridConfig,
    params: &MaskGenParams,
) -> Result<InstanceMaskSet> {
    params.validate()?;
    let to_scan = scan_pose.inverse();
    let mut entries = Vec::new();
    for (&id, agg) in map.instances() {
        let local: Vec<Point3<f64>> = agg.points.iter().map(|p| to_scan.apply(*p)).collect();
        let mask = clean_occupancy(occupancy_mask(&local, grid), params);
        let area = mask.area();
        if area == 0 || area < params.min_area_pixels {
            continue;
        }
        if params.presence_filter && !instance_present(scan, id, grid) {
            continue;
        }
        entries.push(MaskEntry {
            instance_id: id,
            class_label: 0,
            mask,
        });
    }
    InstanceMaskSet::new(scan_id, *grid, entries)
}

fn instance_present(scan: &SemanticScan, instance_id: u32, grid: &GridConfig) -> bool {
    scan.cloud.points().iter().enumerate().any(|(i, p)| {
        scan.instance_id[i] as u32 == instance_id
            && p.z >= grid.z_min
            && p.z < grid.z_max
            && grid.world_to_pixel(p.x, p.y).is_some()
    })
}

/// The footprint visible from a single scan: occupancy of the instance's
/// own points followed by the same morphology as the complete masks.
///
/// Returns `None` when the instance has no in-grid point in the scan. No
/// area filter is applied, so the result may be empty (e.g. a lone pixel
/// removed by opening) — callers doing completion analysis need those zeros.
pub fn single_scan_mask(
    scan: &SemanticScan,
    instance_id: u32,
    grid: &GridConfig,
    params: &MaskGenParams,
) -> Option<BinaryMask> {
    let points: Vec<&Point3<f64>> = scan
        .cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(i, _)| scan.instance_id[*i] as u32 == instance_id)
        .map(|(_, p)| p)
        .collect();
    let occupancy = occupancy_mask(points.iter().copied(), grid);
    if occupancy.is_empty() {
        return None;
    }
    Some(clean_occupancy(occupancy, params))
}
