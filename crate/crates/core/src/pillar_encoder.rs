//! 2D pillar voxelization, per-point featurization and the BEV scatter.
//!
//! A pillar is a grid cell spanning the full configured z range. Points are
//! binned with the half-open convention `col = floor((x − x_min) / v)`, up to
//! `max_points_per_voxel` points are sampled per pillar, each sampled point
//! is expanded to a 10-channel (11 with intensity) feature vector, and a
//! per-pillar reduction of those features can be scattered onto a dense
//! C×H×W BEV tensor.
//!
//! The learned stack this feeds is out of scope here: a trained per-pillar
//! projection typically replaces [`reduce_pillars`] with an F-channel
//! embedding (F = 128 in the companion training setup, with S = 192
//! multi-scale features and E = 256 mask embeddings downstream). The
//! deterministic reductions in this module keep the scatter path testable
//! end to end.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dataset_io::PointCloud;
use crate::error::{Error, Result};

/// BEV grid geometry and voxelization limits.
///
/// `W = round((x_max − x_min) / voxel_size)` columns along x and
/// `H = round((y_max − y_min) / voxel_size)` rows along y; the extents must
/// be integer multiples of the voxel size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
}

pub const DEFAULT_VOXEL_SIZE: f64 = 0.16;
pub const DEFAULT_MAX_POINTS_PER_VOXEL: usize = 32;

impl GridConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        z_min: f64,
        z_max: f64,
        voxel_size: f64,
        max_points_per_voxel: usize,
    ) -> Result<Self> {
        if voxel_size.is_nan() || voxel_size <= 0.0 {
            return Err(Error::Invalid("voxel_size must be positive".into()));
        }
        if max_points_per_voxel < 1 {
            return Err(Error::Invalid("max_points_per_voxel must be ≥ 1".into()));
        }
        for (lo, hi, axis) in [(x_min, x_max, "x"), (y_min, y_max, "y"), (z_min, z_max, "z")] {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Invalid(format!("{axis}_min must be < {axis}_max")));
            }
        }
        for (extent, axis) in [(x_max - x_min, "x"), (y_max - y_min, "y")] {
            let cells = (extent / voxel_size).round();
            if cells < 1.0 || (extent - cells * voxel_size).abs() > 1e-9 {
                return Err(Error::Invalid(format!(
                    "{axis} extent {extent} is not an integer multiple of voxel_size {voxel_size}"
                )));
            }
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            z_min,
            z_max,
            voxel_size,
            max_points_per_voxel,
        })
    }

    /// KITTI forward grid: x ∈ [0, 80], y ∈ [−40, 40], 0.16 m voxels → 500×500.
    pub fn kitti() -> Self {
        Self::new(
            0.0,
            80.0,
            -40.0,
            40.0,
            -3.0,
            1.0,
            DEFAULT_VOXEL_SIZE,
            DEFAULT_MAX_POINTS_PER_VOXEL,
        )
        .expect("static bounds")
    }

    /// SemanticKITTI grid around the sensor: x, y ∈ [−40, 40] → 500×500.
    pub fn semantickitti() -> Self {
        Self::new(
            -40.0,
            40.0,
            -40.0,
            40.0,
            -3.0,
            1.0,
            DEFAULT_VOXEL_SIZE,
            DEFAULT_MAX_POINTS_PER_VOXEL,
        )
        .expect("static bounds")
    }

    /// Columns along x.
    pub fn width(&self) -> usize {
        ((self.x_max - self.x_min) / self.voxel_size).round() as usize
    }

    /// Rows along y.
    pub fn height(&self) -> usize {
        ((self.y_max - self.y_min) / self.voxel_size).round() as usize
    }

    pub fn cell_count(&self) -> usize {
        self.width() * self.height()
    }

    pub fn z_mid(&self) -> f64 {
        0.5 * (self.z_min + self.z_max)
    }

    /// Map world (x, y) to (col, row); `None` when outside the half-open
    /// grid extent.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if x < self.x_min || x >= self.x_max || y < self.y_min || y >= self.y_max {
            return None;
        }
        let col = ((x - self.x_min) / self.voxel_size).floor() as usize;
        let row = ((y - self.y_min) / self.voxel_size).floor() as usize;
        // guard the pathological x == x_max − ε rounding up
        Some((col.min(self.width() - 1), row.min(self.height() - 1)))
    }

    /// Center of cell (col, row) in world coordinates.
    pub fn pixel_to_world(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.x_min + (col as f64 + 0.5) * self.voxel_size,
            self.y_min + (row as f64 + 0.5) * self.voxel_size,
        )
    }

    /// Whether two configs describe the same BEV raster (same x/y bounds and
    /// voxel size). The z range and sampling limit do not affect rasters.
    pub fn same_raster(&self, other: &GridConfig) -> bool {
        self.x_min == other.x_min
            && self.x_max == other.x_max
            && self.y_min == other.y_min
            && self.y_max == other.y_max
            && self.voxel_size == other.voxel_size
    }

    fn in_z_range(&self, z: f64) -> bool {
        z >= self.z_min && z < self.z_max
    }
}

/// Point-sampling policy for pillars holding more than
/// `max_points_per_voxel` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Keep the first k points in input order (deterministic default).
    FirstK,
    /// Keep a seeded uniform sample; deterministic per (seed, row, col), so
    /// independent of any outer work partitioning.
    SeededRandom(u64),
}

/// One occupied grid cell and the sampled point indices inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Pillar {
    pub col: usize,
    pub row: usize,
    /// Indices into the source cloud, ascending (input order).
    pub point_indices: Vec<u32>,
}

/// All occupied pillars of a scan, ordered by (row, col).
#[derive(Debug, Clone, PartialEq)]
pub struct PillarSet {
    pub pillars: Vec<Pillar>,
    pub grid: GridConfig,
}

impl PillarSet {
    pub fn len(&self) -> usize {
        self.pillars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pillars.is_empty()
    }
}

fn mix_seed(seed: u64, row: usize, col: usize) -> u64 {
    // splitmix64 over the combined key
    let mut x = seed ^ ((row as u64) << 32) ^ col as u64;
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Bin the in-range points of `cloud` into pillars, sampling at most
/// `grid.max_points_per_voxel` points per pillar under `sampling`.
pub fn voxelize(cloud: &PointCloud, grid: &GridConfig, sampling: Sampling) -> PillarSet {
    let mut cells: HashMap<(usize, usize), Vec<u32>> = HashMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        if !grid.in_z_range(p.z) {
            continue;
        }
        if let Some((col, row)) = grid.world_to_pixel(p.x, p.y) {
            cells.entry((row, col)).or_default().push(i as u32);
        }
    }
    let mut keys: Vec<(usize, usize)> = cells.keys().copied().collect();
    keys.sort_unstable();
    let pillars = keys
        .into_iter()
        .map(|(row, col)| {
            let mut indices = cells.remove(&(row, col)).unwrap();
            let k = grid.max_points_per_voxel;
            if indices.len() > k {
                match sampling {
                    Sampling::FirstK => indices.truncate(k),
                    Sampling::SeededRandom(seed) => {
                        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, row, col));
                        let chosen = rand::seq::index::sample(&mut rng, indices.len(), k);
                        let mut picked: Vec<u32> =
                            chosen.iter().map(|j| indices[j]).collect();
                        picked.sort_unstable();
                        indices = picked;
                    }
                }
            }
            Pillar {
                col,
                row,
                point_indices: indices,
            }
        })
        .collect();
    PillarSet {
        pillars,
        grid: *grid,
    }
}

/// How the per-point "distance of the voxel" channel is computed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DistanceMode {
    /// Horizontal distance of the pillar center from the origin (default).
    #[default]
    PillarCenter2d,
    /// 3D distance of the pillar center (z at the mid of the z range).
    PillarCenter3d,
}

/// Dense per-pillar, per-point feature block, zero-padded past the valid
/// count of each pillar.
///
/// Channel layout: 0–2 raw x, y, z; 3 pillar distance; 4–6 offset from the
/// pillar center; 7–9 offset from the pillar's sampled-point mean; 10 the
/// return strength when the cloud carries one.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFeatureTensor {
    data: Vec<f64>,
    pillar_count: usize,
    point_capacity: usize,
    channels: usize,
    valid_counts: Vec<u32>,
}

impl PointFeatureTensor {
    pub fn pillar_count(&self) -> usize {
        self.pillar_count
    }

    pub fn point_capacity(&self) -> usize {
        self.point_capacity
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn valid_count(&self, pillar: usize) -> usize {
        self.valid_counts[pillar] as usize
    }

    pub fn feature(&self, pillar: usize, point: usize, channel: usize) -> f64 {
        self.data[(pillar * self.point_capacity + point) * self.channels + channel]
    }
}

/// [`featurize_with`] under the default distance mode.
pub fn featurize(cloud: &PointCloud, pillars: &PillarSet) -> PointFeatureTensor {
    featurize_with(cloud, pillars, DistanceMode::default())
}

/// Expand every sampled point to its feature vector.
pub fn featurize_with(
    cloud: &PointCloud,
    pillars: &PillarSet,
    distance: DistanceMode,
) -> PointFeatureTensor {
    let grid = &pillars.grid;
    let channels = if cloud.intensity().is_some() { 11 } else { 10 };
    let capacity = grid.max_points_per_voxel;
    let mut data = vec![0.0; pillars.len() * capacity * channels];
    let mut valid_counts = Vec::with_capacity(pillars.len());
    let points = cloud.points();
    let z_mid = grid.z_mid();

    for (pi, pillar) in pillars.pillars.iter().enumerate() {
        let (cx, cy) = grid.pixel_to_world(pillar.col, pillar.row);
        let dist = match distance {
            DistanceMode::PillarCenter2d => (cx * cx + cy * cy).sqrt(),
            DistanceMode::PillarCenter3d => (cx * cx + cy * cy + z_mid * z_mid).sqrt(),
        };
        let n = pillar.point_indices.len() as f64;
        let mut mean = [0.0f64; 3];
        for &idx in &pillar.point_indices {
            let p = points[idx as usize];
            mean[0] += p.x;
            mean[1] += p.y;
            mean[2] += p.z;
        }
        for m in &mut mean {
            *m /= n;
        }
        for (k, &idx) in pillar.point_indices.iter().enumerate() {
            let p = points[idx as usize];
            let base = (pi * capacity + k) * channels;
            data[base] = p.x;
            data[base + 1] = p.y;
            data[base + 2] = p.z;
            data[base + 3] = dist;
            data[base + 4] = p.x - cx;
            data[base + 5] = p.y - cy;
            data[base + 6] = p.z - z_mid;
            data[base + 7] = p.x - mean[0];
            data[base + 8] = p.y - mean[1];
            data[base + 9] = p.z - mean[2];
            if channels == 11 {
                data[base + 10] = cloud.intensity().unwrap()[idx as usize];
            }
        }
        valid_counts.push(pillar.point_indices.len() as u32);
    }

    PointFeatureTensor {
        data,
        pillar_count: pillars.len(),
        point_capacity: capacity,
        channels,
        valid_counts,
    }
}

/// Channel-wise reduction over the valid points of a pillar, standing in for
/// a learned per-pillar embedding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PillarReduction {
    /// Channel-wise max over valid points (default).
    #[default]
    Max,
    /// Channel-wise arithmetic mean over valid points.
    Mean,
}

/// Collapse the per-point features to one C-vector per pillar.
pub fn reduce_pillars(features: &PointFeatureTensor, reduction: PillarReduction) -> Vec<Vec<f64>> {
    let c = features.channels();
    (0..features.pillar_count())
        .map(|pi| {
            let n = features.valid_count(pi);
            (0..c)
                .map(|ch| match reduction {
                    PillarReduction::Max => (0..n)
                        .map(|k| features.feature(pi, k, ch))
                        .fold(f64::NEG_INFINITY, f64::max),
                    PillarReduction::Mean => {
                        (0..n).map(|k| features.feature(pi, k, ch)).sum::<f64>() / n as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Dense C×H×W BEV tensor tied to a grid. Cells without a pillar are
/// exactly zero. Values are stored as f32, matching the on-disk format.
#[derive(Debug, Clone, PartialEq)]
pub struct BevTensor {
    data: Vec<f32>,
    channels: usize,
    pub grid: GridConfig,
}

pub const BEV_TENSOR_MAGIC: &[u8; 4] = b"BEVT";

impl BevTensor {
    pub fn zeros(channels: usize, grid: GridConfig) -> Self {
        Self {
            data: vec![0.0; channels * grid.cell_count()],
            channels,
            grid,
        }
    }

    /// Wrap raw channel-major data (length C·H·W).
    pub fn from_data(data: Vec<f32>, channels: usize, grid: GridConfig) -> Result<Self> {
        if data.len() != channels * grid.cell_count() {
            return Err(Error::LengthMismatch {
                expected: channels * grid.cell_count(),
                actual: data.len(),
            });
        }
        Ok(Self {
            data,
            channels,
            grid,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.grid.height() + row) * self.grid.width() + col]
    }

    fn set(&mut self, channel: usize, row: usize, col: usize, value: f32) {
        self.data[(channel * self.grid.height() + row) * self.grid.width() + col] = value;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Serialize as magic "BEVT", u32 LE dims (C, H, W), then C·H·W f32 LE
    /// values, row-major per channel.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(16 + self.data.len() * 4);
        bytes.extend_from_slice(BEV_TENSOR_MAGIC);
        for dim in [self.channels, self.grid.height(), self.grid.width()] {
            bytes.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Read a tensor written by [`BevTensor::write`]. The file stores no
    /// grid geometry, so the caller supplies the grid; its H×W must match
    /// the stored dims.
    pub fn read(path: impl AsRef<Path>, grid: GridConfig) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[0..4] != BEV_TENSOR_MAGIC {
            return Err(Error::format(path, "missing BEVT magic"));
        }
        let dim = |i: usize| {
            u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        };
        let (c, h, w) = (dim(0), dim(1), dim(2));
        if h != grid.height() || w != grid.width() {
            return Err(Error::format(
                path,
                format!(
                    "stored dims {h}×{w} do not match the grid ({}×{})",
                    grid.height(),
                    grid.width()
                ),
            ));
        }
        let expected = 16 + c * h * w * 4;
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                format!("file size {} does not match dims (want {expected})", bytes.len()),
            ));
        }
        let data = bytes[16..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self {
            data,
            channels: c,
            grid,
        })
    }
}

/// Write one C-vector per pillar into a dense BEV tensor; all other cells
/// stay zero.
pub fn scatter_to_bev(pillars: &PillarSet, per_pillar: &[Vec<f64>]) -> Result<BevTensor> {
    if per_pillar.len() != pillars.len() {
        return Err(Error::LengthMismatch {
            expected: pillars.len(),
            actual: per_pillar.len(),
        });
    }
    let channels = per_pillar.first().map_or(0, |f| f.len());
    for f in per_pillar {
        if f.len() != channels {
            return Err(Error::LengthMismatch {
                expected: channels,
                actual: f.len(),
            });
        }
    }
    let mut out = BevTensor::zeros(channels, pillars.grid);
    for (pillar, feats) in pillars.pillars.iter().zip(per_pillar) {
        for (c, v) in feats.iter().enumerate() {
            out.set(c, pillar.row, pillar.col, *v as f32);
        }
    }
    Ok(out)
}

/// Full deterministic encode path: voxelize, featurize, reduce, scatter.
///
/// ```
/// use maskbev_core::dataset_io::PointCloud;
/// use maskbev_core::nalgebra::Point3;
/// use maskbev_core::pillar_encoder::{encode_scan, GridConfig, PillarReduction, Sampling};
///
/// let cloud = PointCloud::new(vec![Point3::new(10.0, 0.0, -1.0)], None).unwrap();
/// let bev = encode_scan(&cloud, &GridConfig::kitti(), Sampling::FirstK, PillarReduction::Max);
/// assert_eq!(bev.channels(), 10);
/// assert_eq!(bev.grid.width(), 500);
/// ```
pub fn encode_scan(
    cloud: &PointCloud,
    grid: &GridConfig,
    sampling: Sampling,
    reduction: PillarReduction,
) -> BevTensor {
    let pillars = voxelize(cloud, grid, sampling);
    let features = featurize(cloud, &pillars);
    let reduced = reduce_pillars(&features, reduction);
    scatter_to_bev(&pillars, &reduced).expect("reduction yields one vector per pillar")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn cloud(points: Vec<Point3<f64>>) -> PointCloud {
        PointCloud::new(points, None).unwrap()
    }

    #[test]
    fn kitti_grid_is_500_by_500() {
        let grid = GridConfig::kitti();
        assert_eq!(grid.width(), 500);
        assert_eq!(grid.height(), 500);
        let grid = GridConfig::semantickitti();
        assert_eq!(grid.width(), 500);
        assert_eq!(grid.height(), 500);
    }

    #[test]
    fn non_multiple_extent_rejected() {
        assert!(GridConfig::new(0.0, 80.1, -40.0, 40.0, -3.0, 1.0, 0.16, 32).is_err());
    }

    #[test]
    fn world_to_pixel_floor_formula() {
        let grid = GridConfig::kitti();
        assert_eq!(grid.world_to_pixel(0.0, -40.0), Some((0, 0)));
        assert_eq!(grid.world_to_pixel(79.99, 39.99), Some((499, 499)));
        assert_eq!(grid.world_to_pixel(80.0, 0.0), None);
        assert_eq!(grid.world_to_pixel(-0.0001, 0.0), None);
    }

    #[test]
    fn pixel_to_world_is_cell_center() {
        let grid = GridConfig::kitti();
        let (x, y) = grid.pixel_to_world(0, 0);
        assert!((x - 0.08).abs() < 1e-12);
        assert!((y + 39.92).abs() < 1e-12);
        let (col, row) = grid.world_to_pixel(x, y).unwrap();
        assert_eq!((col, row), (0, 0));
    }

    #[test]
    fn single_point_in_corner_cell() {
        let grid = GridConfig::kitti();
        let v = grid.voxel_size;
        let c = cloud(vec![Point3::new(0.5 * v, -40.0 + 0.5 * v, grid.z_mid())]);
        let pillars = voxelize(&c, &grid, Sampling::FirstK);
        assert_eq!(pillars.len(), 1);
        assert_eq!((pillars.pillars[0].col, pillars.pillars[0].row), (0, 0));
        assert_eq!(pillars.pillars[0].point_indices, vec![0]);
    }

    #[test]
    fn first_k_keeps_first_32_of_40() {
        let grid = GridConfig::kitti();
        let pts = vec![Point3::new(1.0, 1.0, 0.0); 40];
        let pillars = voxelize(&cloud(pts), &grid, Sampling::FirstK);
        assert_eq!(pillars.len(), 1);
        let expected: Vec<u32> = (0..32).collect();
        assert_eq!(pillars.pillars[0].point_indices, expected);
    }

    #[test]
    fn seeded_sampling_is_deterministic_and_sized() {
        let grid = GridConfig::kitti();
        let pts: Vec<_> = (0..40)
            .map(|i| Point3::new(1.0 + i as f64 * 1e-4, 1.0, 0.0))
            .collect();
        let a = voxelize(&cloud(pts.clone()), &grid, Sampling::SeededRandom(7));
        let b = voxelize(&cloud(pts.clone()), &grid, Sampling::SeededRandom(7));
        let c = voxelize(&cloud(pts), &grid, Sampling::SeededRandom(8));
        assert_eq!(a, b);
        assert_eq!(a.pillars[0].point_indices.len(), 32);
        assert_ne!(a.pillars[0].point_indices, c.pillars[0].point_indices);
    }

    #[test]
    fn point_on_x_max_boundary_is_dropped() {
        let grid = GridConfig::kitti();
        let pillars = voxelize(&cloud(vec![Point3::new(80.0, 0.0, 0.0)]), &grid, Sampling::FirstK);
        assert!(pillars.is_empty());
    }

    #[test]
    fn out_of_z_range_points_are_dropped() {
        let grid = GridConfig::kitti();
        let pillars = voxelize(&cloud(vec![Point3::new(1.0, 1.0, 5.0)]), &grid, Sampling::FirstK);
        assert!(pillars.is_empty());
    }

    #[test]
    fn centered_point_has_zero_offsets() {
        let grid = GridConfig::kitti();
        let (cx, cy) = grid.pixel_to_world(10, 20);
        let c = cloud(vec![Point3::new(cx, cy, grid.z_mid())]);
        let pillars = voxelize(&c, &grid, Sampling::FirstK);
        let f = featurize(&c, &pillars);
        assert_eq!(f.channels(), 10);
        for ch in 4..10 {
            assert_eq!(f.feature(0, 0, ch), 0.0, "channel {ch}");
        }
        assert!((f.feature(0, 0, 3) - (cx * cx + cy * cy).sqrt()).abs() < 1e-12);
        assert_eq!(f.feature(0, 0, 0), cx);
    }

    #[test]
    fn symmetric_points_have_opposite_mean_offsets() {
        let grid = GridConfig::kitti();
        let (cx, cy) = grid.pixel_to_world(100, 100);
        let c = cloud(vec![
            Point3::new(cx - 0.05, cy, -1.0),
            Point3::new(cx + 0.05, cy, -1.0),
        ]);
        let pillars = voxelize(&c, &grid, Sampling::FirstK);
        let f = featurize(&c, &pillars);
        for ch in 7..10 {
            assert!((f.feature(0, 0, ch) + f.feature(0, 1, ch)).abs() < 1e-12);
        }
    }

    #[test]
    fn intensity_adds_a_channel() {
        let grid = GridConfig::kitti();
        let pts = vec![Point3::new(1.0, 1.0, 0.0)];
        let with = PointCloud::new(pts.clone(), Some(vec![0.7])).unwrap();
        let without = PointCloud::new(pts, None).unwrap();
        let p1 = voxelize(&with, &grid, Sampling::FirstK);
        let p2 = voxelize(&without, &grid, Sampling::FirstK);
        assert_eq!(featurize(&with, &p1).channels(), 11);
        assert_eq!(featurize(&without, &p2).channels(), 10);
        assert_eq!(featurize(&with, &p1).feature(0, 0, 10), 0.7);
    }

    #[test]
    fn mean_offsets_sum_to_zero_per_pillar() {
        let grid = GridConfig::kitti();
        let pts: Vec<_> = (0..20)
            .map(|i| Point3::new(5.0 + (i as f64) * 0.005, 3.0 + (i as f64) * 0.003, -1.0 + 0.05 * i as f64))
            .collect();
        let c = cloud(pts);
        let pillars = voxelize(&c, &grid, Sampling::FirstK);
        let f = featurize(&c, &pillars);
        for pi in 0..f.pillar_count() {
            for ch in 7..10 {
                let sum: f64 = (0..f.valid_count(pi)).map(|k| f.feature(pi, k, ch)).sum();
                assert!(sum.abs() < 1e-5 * f.valid_count(pi) as f64);
            }
        }
    }

    #[test]
    fn scatter_empty_set_is_all_zero() {
        let grid = GridConfig::kitti();
        let pillars = voxelize(&PointCloud::empty(), &grid, Sampling::FirstK);
        let bev = scatter_to_bev(&pillars, &[]).unwrap();
        assert!(bev.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scatter_writes_single_cell() {
        let grid = GridConfig::kitti();
        let pillars = PillarSet {
            pillars: vec![Pillar {
                col: 3,
                row: 7,
                point_indices: vec![0],
            }],
            grid,
        };
        let bev = scatter_to_bev(&pillars, &[vec![5.0]]).unwrap();
        assert_eq!(bev.get(0, 7, 3), 5.0);
        let nonzero = bev.data().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn scatter_preserves_disjoint_writes() {
        let grid = GridConfig::kitti();
        let pillars = PillarSet {
            pillars: vec![
                Pillar {
                    col: 1,
                    row: 2,
                    point_indices: vec![0],
                },
                Pillar {
                    col: 4,
                    row: 5,
                    point_indices: vec![1],
                },
            ],
            grid,
        };
        let bev = scatter_to_bev(&pillars, &[vec![1.5, -2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(bev.get(0, 2, 1), 1.5);
        assert_eq!(bev.get(1, 2, 1), -2.0);
        assert_eq!(bev.get(0, 5, 4), 3.0);
        assert_eq!(bev.get(1, 5, 4), 4.0);
    }

    #[test]
    fn scatter_count_mismatch_is_error() {
        let grid = GridConfig::kitti();
        let pillars = voxelize(&PointCloud::empty(), &grid, Sampling::FirstK);
        assert!(scatter_to_bev(&pillars, &[vec![1.0]]).is_err());
    }

    #[test]
    fn scatter_then_gather_roundtrips() {
        let grid = GridConfig::kitti();
        let c = cloud(vec![
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(10.0, -5.0, -1.0),
            Point3::new(70.0, 30.0, 0.5),
        ]);
        let pillars = voxelize(&c, &grid, Sampling::FirstK);
        let feats = reduce_pillars(&featurize(&c, &pillars), PillarReduction::Max);
        let bev = scatter_to_bev(&pillars, &feats).unwrap();
        for (pillar, f) in pillars.pillars.iter().zip(&feats) {
            for (ch, v) in f.iter().enumerate() {
                assert_eq!(bev.get(ch, pillar.row, pillar.col), *v as f32);
            }
        }
    }

    #[test]
    fn bev_tensor_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bevt");
        let grid = GridConfig::new(0.0, 1.6, 0.0, 0.8, -1.0, 1.0, 0.16, 4).unwrap();
        let mut bev = BevTensor::zeros(2, grid);
        bev.set(0, 1, 3, 1.25);
        bev.set(1, 4, 9, -7.5);
        bev.write(&path).unwrap();
        let back = BevTensor::read(&path, grid).unwrap();
        assert_eq!(back, bev);

        let header = std::fs::read(&path).unwrap();
        assert_eq!(&header[0..4], b"BEVT");
        assert_eq!(u32::from_le_bytes(header[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(header[8..12].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(header[12..16].try_into().unwrap()), 10);
    }

    #[test]
    fn reduce_mean_and_max() {
        let grid = GridConfig::kitti();
        let c = cloud(vec![Point3::new(1.0, 1.0, -1.0), Point3::new(1.05, 1.0, 0.0)]);
        let pillars = voxelize(&c, &grid, Sampling::FirstK);
        let f = featurize(&c, &pillars);
        let max = reduce_pillars(&f, PillarReduction::Max);
        let mean = reduce_pillars(&f, PillarReduction::Mean);
        assert_eq!(max[0][0], 1.05);
        assert!((mean[0][0] - 1.025).abs() < 1e-12);
        assert_eq!(max[0][2], 0.0);
        assert!((mean[0][2] + 0.5).abs() < 1e-12);
    }
}
