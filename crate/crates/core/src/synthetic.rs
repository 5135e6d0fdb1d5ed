//! Synthetic scenes and mini-sequences with exactly known geometry, used by
//! the test suites and handy for demos. Car footprints are sampled densely
//! (two points per cell side) so occupancy rasters cover every footprint
//! cell.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::dataset_io::{
    write_point_cloud, write_semantic_labels, ObjectBox3D, PointCloud, Pose, SemanticScan,
};
use crate::error::{Error, Result};

/// A car-shaped instance in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCar {
    pub cx: f64,
    pub cy: f64,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl SyntheticCar {
    pub fn new(cx: f64, cy: f64, yaw: f64) -> Self {
        Self {
            cx,
            cy,
            yaw,
            length: 4.0,
            width: 1.6,
        }
    }

    pub fn to_box(&self) -> ObjectBox3D {
        ObjectBox3D {
            center: Point3::new(self.cx, self.cy, -0.25),
            length: self.length,
            width: self.width,
            height: 1.5,
            yaw: self.yaw,
            class_name: "Car".into(),
            truncated: 0.0,
            occluded: 0,
            image_bbox_height: 50.0,
        }
    }

    /// Dense world-frame footprint points at `spacing`, optionally keeping
    /// only one half along the box length axis.
    pub fn points(&self, spacing: f64, half: Option<Half>, z: f64) -> Vec<Point3<f64>> {
        let (cos, sin) = (self.yaw.cos(), self.yaw.sin());
        let mut out = Vec::new();
        let nu = (self.length / spacing).round() as i64;
        let nv = (self.width / spacing).round() as i64;
        for iu in 0..=nu {
            let u = -self.length / 2.0 + iu as f64 * spacing;
            match half {
                Some(Half::Front) if u < 0.0 => continue,
                Some(Half::Rear) if u > 0.0 => continue,
                _ => {}
            }
            for iv in 0..=nv {
                let v = -self.width / 2.0 + iv as f64 * spacing;
                out.push(Point3::new(
                    self.cx + cos * u - sin * v,
                    self.cy + sin * u + cos * v,
                    z,
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Front,
    Rear,
}

/// Which part of a car a scan observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Full,
    Half(Half),
    Hidden,
}

/// A mini-sequence: per-scan annotated point clouds with poses, plus the
/// generating cars (instance id = index + 1).
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub scans: Vec<SemanticScan>,
    pub poses: Vec<Pose>,
    pub cars: Vec<SyntheticCar>,
}

pub const SYNTHETIC_CAR_CLASS: u16 = 10;
const ROAD_CLASS: u16 = 40;
const POINT_SPACING: f64 = 0.08;
const CAR_Z: f64 = -1.0;

fn yaw_pose(yaw: f64, translation: Vector3<f64>) -> Pose {
    let rot = Matrix3::new(
        yaw.cos(),
        -yaw.sin(),
        0.0,
        yaw.sin(),
        yaw.cos(),
        0.0,
        0.0,
        0.0,
        1.0,
    );
    Pose::new(rot, translation).expect("rotation about z is rigid")
}

/// Build a sequence from per-scan poses and a visibility table
/// (`visibility[scan][car]`). Scan points are expressed in the scan frame;
/// a sparse ring of road points is added around the sensor.
pub fn build_sequence(
    cars: &[SyntheticCar],
    poses: &[Pose],
    visibility: &[Vec<Visibility>],
) -> Result<SyntheticSequence> {
    if poses.len() != visibility.len() {
        return Err(Error::LengthMismatch {
            expected: poses.len(),
            actual: visibility.len(),
        });
    }
    let mut scans = Vec::new();
    for (pose, vis) in poses.iter().zip(visibility) {
        if vis.len() != cars.len() {
            return Err(Error::LengthMismatch {
                expected: cars.len(),
                actual: vis.len(),
            });
        }
        let to_scan = pose.inverse();
        let mut points = Vec::new();
        let mut semantic = Vec::new();
        let mut instance = Vec::new();
        for (k, (car, v)) in cars.iter().zip(vis).enumerate() {
            let half = match v {
                Visibility::Full => None,
                Visibility::Half(h) => Some(*h),
                Visibility::Hidden => continue,
            };
            for p in car.points(POINT_SPACING, half, CAR_Z) {
                points.push(to_scan.apply(p));
                semantic.push(SYNTHETIC_CAR_CLASS);
                instance.push((k + 1) as u16);
            }
        }
        // road ring in the scan frame
        for i in 0..64 {
            let a = i as f64 * std::f64::consts::TAU / 64.0;
            points.push(Point3::new(12.0 * a.cos(), 12.0 * a.sin(), -1.6));
            semantic.push(ROAD_CLASS);
            instance.push(0);
        }
        let n = points.len();
        let cloud = PointCloud::new(points, Some(vec![0.5; n]))?;
        scans.push(SemanticScan::new(cloud, semantic, instance)?);
    }
    Ok(SyntheticSequence {
        scans,
        poses: poses.to_vec(),
        cars: cars.to_vec(),
    })
}

/// Three scans with a small known rigid motion; every car fully visible.
pub fn sequence_simple() -> SyntheticSequence {
    let cars = vec![
        SyntheticCar::new(8.0, 3.0, 0.0),
        SyntheticCar::new(12.0, -5.0, 0.6),
        SyntheticCar::new(-6.0, 6.0, -1.1),
    ];
    let poses = vec![
        Pose::identity(),
        yaw_pose(0.05, Vector3::new(1.5, 0.3, 0.0)),
        yaw_pose(0.10, Vector3::new(3.0, 0.6, 0.0)),
    ];
    let visibility = vec![vec![Visibility::Full; cars.len()]; poses.len()];
    build_sequence(&cars, &poses, &visibility).expect("static fixture")
}

/// Three scans where car 1 shows exactly one half per scan (front, rear,
/// front) while car 2 is always fully visible: car 1's best single-scan
/// footprint is half its complete footprint.
pub fn sequence_half_visible() -> SyntheticSequence {
    let cars = vec![
        SyntheticCar::new(8.0, 2.0, 0.0),
        SyntheticCar::new(-4.0, -6.0, 0.4),
    ];
    let poses = vec![
        Pose::identity(),
        yaw_pose(0.04, Vector3::new(1.0, 0.2, 0.0)),
        yaw_pose(0.08, Vector3::new(2.0, 0.4, 0.0)),
    ];
    let visibility = vec![
        vec![Visibility::Half(Half::Front), Visibility::Full],
        vec![Visibility::Half(Half::Rear), Visibility::Full],
        vec![Visibility::Half(Half::Front), Visibility::Full],
    ];
    build_sequence(&cars, &poses, &visibility).expect("static fixture")
}

impl SyntheticSequence {
    /// Vehicle classes matching the synthetic labels.
    pub fn vehicle_classes() -> BTreeSet<u16> {
        [SYNTHETIC_CAR_CLASS].into()
    }

    /// Write the sequence in the SemanticKITTI directory layout:
    /// `root/sequences/<seq>/{velodyne,labels,poses.txt,calib.txt}` with an
    /// identity LiDAR-to-camera extrinsic.
    pub fn write_semantickitti(&self, root: &Path, sequence: &str) -> Result<()> {
        let seq_dir = root.join("sequences").join(sequence);
        let velo = seq_dir.join("velodyne");
        let labels = seq_dir.join("labels");
        fs::create_dir_all(&velo).map_err(|e| Error::io(&velo, e))?;
        fs::create_dir_all(&labels).map_err(|e| Error::io(&labels, e))?;
        let mut poses_text = String::new();
        for (i, (scan, pose)) in self.scans.iter().zip(&self.poses).enumerate() {
            write_point_cloud(velo.join(format!("{i:06}.bin")), &scan.cloud)?;
            write_semantic_labels(labels.join(format!("{i:06}.label")), scan)?;
            let r = pose.rotation;
            let t = pose.translation;
            for row in 0..3 {
                for col in 0..3 {
                    poses_text.push_str(&format!("{} ", r[(row, col)]));
                }
                poses_text.push_str(&format!("{}", t[row]));
                poses_text.push(if row == 2 { '\n' } else { ' ' });
            }
        }
        let poses_path = seq_dir.join("poses.txt");
        fs::write(&poses_path, poses_text).map_err(|e| Error::io(&poses_path, e))?;
        let calib_path = seq_dir.join("calib.txt");
        fs::write(&calib_path, "Tr: 1 0 0 0 0 1 0 0 0 0 1 0\n").map_err(|e| Error::io(&calib_path, e))
    }
}

/// A single KITTI-style scene: a forward-facing cloud plus box labels.
#[derive(Debug, Clone)]
pub struct SyntheticKittiScene {
    pub cloud: PointCloud,
    pub boxes: Vec<ObjectBox3D>,
}

/// Cars ahead of the sensor with dense footprint points and a road ring.
pub fn kitti_scene(cars: &[SyntheticCar]) -> SyntheticKittiScene {
    let mut points = Vec::new();
    for car in cars {
        points.extend(car.points(POINT_SPACING, None, CAR_Z));
    }
    for i in 0..64 {
        let a = i as f64 * std::f64::consts::PI / 64.0 - std::f64::consts::FRAC_PI_2;
        points.push(Point3::new(
            15.0 * a.cos().abs().max(0.1) * a.cos().signum().max(0.0) + 5.0,
            10.0 * a.sin(),
            -1.6,
        ));
    }
    let n = points.len();
    let cloud = PointCloud::new(points, Some(vec![0.4; n])).expect("finite fixture");
    SyntheticKittiScene {
        cloud,
        boxes: cars.iter().map(|c| c.to_box()).collect(),
    }
}

/// Canonical LiDAR-to-camera axis permutation used by the synthetic KITTI
/// calibration files.
pub const KITTI_CALIB_TEXT: &str =
    "P0: 1 0 0 0 0 1 0 0 0 0 1 0\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0\n";

/// Write scenes in the KITTI object layout:
/// `root/{velodyne,label_2,calib}/<scan_id>.{bin,txt,txt}`.
pub fn write_kitti_scenes(root: &Path, scenes: &[(String, SyntheticKittiScene)]) -> Result<()> {
    let velo = root.join("velodyne");
    let label_dir = root.join("label_2");
    let calib_dir = root.join("calib");
    for dir in [&velo, &label_dir, &calib_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (scan_id, scene) in scenes {
        write_point_cloud(velo.join(format!("{scan_id}.bin")), &scene.cloud)?;
        let calib_path = calib_dir.join(format!("{scan_id}.txt"));
        fs::write(&calib_path, KITTI_CALIB_TEXT).map_err(|e| Error::io(&calib_path, e))?;
        crate::dataset_io::write_kitti_objects(
            label_dir.join(format!("{scan_id}.txt")),
            &scene.boxes,
            &calib_path,
        )?;
    }
    Ok(())
}
