//! KITTI / SemanticKITTI ingestion: domain types, on-disk formats and crops.
//!
//! All readers return owned, validated in-memory values; they are independent
//! of each other and may run concurrently per file. Coordinates are meters in
//! the LiDAR sensor frame unless a [`Pose`] has been applied.

mod calib;
mod velodyne;

pub use calib::{
    read_calib_file, read_kitti_objects, read_kitti_objects_filtered, read_poses,
    write_kitti_objects, CalibFile,
};
pub use velodyne::{
    read_point_cloud, read_semantic_labels, write_point_cloud, write_semantic_labels,
};

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

/// Semantic class ids treated as static vehicles by default (SemanticKITTI
/// "car"). Moving-object ids (≥ 252) are deliberately not in this set.
pub const DEFAULT_VEHICLE_CLASSES: &[u16] = &[10];

/// First semantic id of the moving-object range in SemanticKITTI labels.
pub const MOVING_CLASS_START: u16 = 252;

/// A LiDAR scan: xyz points with an optional per-point return strength.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    intensity: Option<Vec<f64>>,
}

impl PointCloud {
    /// Build a cloud, validating that coordinates are finite and that the
    /// intensity channel (if any) has one value per point, each in [0, 1].
    pub fn new(points: Vec<Point3<f64>>, intensity: Option<Vec<f64>>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::Invalid(format!(
                    "non-finite coordinate at point {i}"
                )));
            }
        }
        if let Some(vals) = &intensity {
            if vals.len() != points.len() {
                return Err(Error::LengthMismatch {
                    expected: points.len(),
                    actual: vals.len(),
                });
            }
            for (i, v) in vals.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                    return Err(Error::Invalid(format!(
                        "intensity {v} out of [0, 1] at point {i}"
                    )));
                }
            }
        }
        Ok(Self { points, intensity })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            intensity: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn intensity(&self) -> Option<&[f64]> {
        self.intensity.as_deref()
    }

    /// Keep exactly the points whose index satisfies `keep`, preserving order.
    pub fn filter_by_index(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut points = Vec::new();
        let mut intensity = self.intensity.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            if keep(i) {
                points.push(*p);
                if let (Some(out), Some(vals)) = (&mut intensity, &self.intensity) {
                    out.push(vals[i]);
                }
            }
        }
        Self { points, intensity }
    }

    /// Apply `f` to every point in index order, keeping attributes. The
    /// caller is responsible for `f` producing finite coordinates.
    pub fn map_points(&self, mut f: impl FnMut(Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            points: self.points.iter().map(|p| f(*p)).collect(),
            intensity: self.intensity.clone(),
        }
    }

    /// Concatenate `other` after `self`. A missing intensity channel on
    /// either side is padded with zeros when the other side has one.
    pub fn concat(&self, other: &PointCloud) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let intensity = match (&self.intensity, &other.intensity) {
            (None, None) => None,
            (a, b) => {
                let mut vals = a.clone().unwrap_or_else(|| vec![0.0; self.len()]);
                vals.extend(b.clone().unwrap_or_else(|| vec![0.0; other.len()]));
                Some(vals)
            }
        };
        Self { points, intensity }
    }
}

/// A scan with per-point semantic and instance annotations.
///
/// `instance_id` is 0 for points without an instance annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticScan {
    pub cloud: PointCloud,
    pub semantic_id: Vec<u16>,
    pub instance_id: Vec<u16>,
}

impl SemanticScan {
    pub fn new(cloud: PointCloud, semantic_id: Vec<u16>, instance_id: Vec<u16>) -> Result<Self> {
        if semantic_id.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                expected: cloud.len(),
                actual: semantic_id.len(),
            });
        }
        if instance_id.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                expected: cloud.len(),
                actual: instance_id.len(),
            });
        }
        Ok(Self {
            cloud,
            semantic_id,
            instance_id,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn filter_by_index(&self, keep: impl Fn(usize) -> bool) -> Self {
        let cloud = self.cloud.filter_by_index(&keep);
        let semantic_id = filter_vec(&self.semantic_id, &keep);
        let instance_id = filter_vec(&self.instance_id, &keep);
        Self {
            cloud,
            semantic_id,
            instance_id,
        }
    }
}

fn filter_vec<T: Copy>(vals: &[T], keep: impl Fn(usize) -> bool) -> Vec<T> {
    vals.iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, v)| *v)
        .collect()
}

/// A rigid transform mapping sensor-frame coordinates to world-frame
/// coordinates: `p_world = rotation * p_sensor + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Allowed deviation of `R Rᵀ` from identity (and of `det R` from +1).
pub const POSE_ORTHONORMALITY_TOL: f64 = 1e-5;

impl Pose {
    /// Validate orthonormality (`R Rᵀ = I`, `det R = +1`) within
    /// [`POSE_ORTHONORMALITY_TOL`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation * rotation.transpose();
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > POSE_ORTHONORMALITY_TOL {
            return Err(Error::Invalid(format!(
                "rotation not orthonormal: max |R Rᵀ − I| = {dev:.3e}"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > POSE_ORTHONORMALITY_TOL {
            return Err(Error::Invalid(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// The inverse rigid transform (world to sensor frame).
    pub fn inverse(&self) -> Self {
        let rot = self.rotation.transpose();
        Self {
            rotation: rot,
            translation: -(rot * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// A 3D bounding box in the LiDAR frame, with the KITTI annotation fields
/// needed for difficulty bucketing carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectBox3D {
    /// Geometric box center.
    pub center: Point3<f64>,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Heading about the vertical axis, in [-π, π].
    pub yaw: f64,
    pub class_name: String,
    pub truncated: f64,
    pub occluded: u8,
    /// Height of the 2D image bounding box in pixels (y2 − y1).
    pub image_bbox_height: f64,
}

impl ObjectBox3D {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Invalid(format!(
                "box dimensions must be positive, got l={} w={} h={}",
                self.length, self.width, self.height
            )));
        }
        if !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&self.yaw) {
            return Err(Error::Invalid(format!("yaw {} outside [-π, π]", self.yaw)));
        }
        Ok(())
    }
}

/// Wrap an angle into [-π, π]; angles already in range pass through
/// bit-identically.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if (-PI..=PI).contains(&a) {
        return a;
    }
    let mut a = a.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CropMode {
    /// Keep points with x ∈ [x_min, x_max), y ∈ [y_min, y_max), z ∈ [z_min, z_max).
    AxisAlignedBox,
    /// Keep points with sqrt(x² + y²) ≤ radius and z ∈ [z_min, z_max).
    Radial { radius: f64 },
}

/// Spatial crop applied to scans before voxelization / label generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub mode: CropMode,
}

/// Default vertical crop: z ∈ [−3, 1] m around the sensor.
pub const DEFAULT_Z_RANGE: (f64, f64) = (-3.0, 1.0);

impl CropRegion {
    pub fn axis_aligned(
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        z_min: f64,
        z_max: f64,
    ) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max && z_min < z_max) {
            return Err(Error::Invalid(
                "crop bounds must satisfy min < max on every axis".into(),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            z_min,
            z_max,
            mode: CropMode::AxisAlignedBox,
        })
    }

    pub fn radial(radius: f64, z_min: f64, z_max: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Invalid("radial crop radius must be positive".into()));
        }
        if z_min >= z_max {
            return Err(Error::Invalid("crop bounds must satisfy z_min < z_max".into()));
        }
        Ok(Self {
            x_min: -radius,
            x_max: radius,
            y_min: -radius,
            y_max: radius,
            z_min,
            z_max,
            mode: CropMode::Radial { radius },
        })
    }

    /// Forward-facing crop used with KITTI box labels: x ∈ [0, 80) m,
    /// y ∈ [−40, 40) m.
    pub fn kitti_default() -> Self {
        Self::axis_aligned(0.0, 80.0, -40.0, 40.0, DEFAULT_Z_RANGE.0, DEFAULT_Z_RANGE.1)
            .expect("static bounds")
    }

    /// 40 m radius around the sensor, used with SemanticKITTI labels.
    pub fn semantickitti_default() -> Self {
        Self::radial(40.0, DEFAULT_Z_RANGE.0, DEFAULT_Z_RANGE.1).expect("static bounds")
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        if p.z < self.z_min || p.z >= self.z_max {
            return false;
        }
        match self.mode {
            CropMode::AxisAlignedBox => {
                p.x >= self.x_min && p.x < self.x_max && p.y >= self.y_min && p.y < self.y_max
            }
            CropMode::Radial { radius } => (p.x * p.x + p.y * p.y).sqrt() <= radius,
        }
    }
}

/// Keep the points of `cloud` inside `region`, preserving order and
/// filtering per-point attributes consistently.
pub fn crop_point_cloud(cloud: &PointCloud, region: &CropRegion) -> PointCloud {
    let points = cloud.points();
    cloud.filter_by_index(|i| region.contains(&points[i]))
}

/// [`crop_point_cloud`] for annotated scans; labels follow their points.
pub fn crop_semantic_scan(scan: &SemanticScan, region: &CropRegion) -> SemanticScan {
    let points = scan.cloud.points();
    scan.filter_by_index(|i| region.contains(&points[i]))
}
