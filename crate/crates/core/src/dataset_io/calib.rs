//! KITTI calibration files, odometry poses and object labels.
//!
//! Calibration files are text key–value lines (`Tr_velo_to_cam: r11 r12 …`).
//! Odometry poses are camera-frame 3×4 transforms, one row-major line per
//! scan; they are re-expressed in the LiDAR frame here so downstream code
//! never sees camera coordinates.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix4, Point3, Vector3, Vector4};

use crate::error::{Error, Result};

use super::{wrap_angle, ObjectBox3D, Pose};

/// Parsed calibration key–value file.
#[derive(Debug, Clone)]
pub struct CalibFile {
    entries: HashMap<String, Vec<f64>>,
}

impl CalibFile {
    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(|v| v.as_slice())
    }

    /// The LiDAR-to-camera extrinsic as a homogeneous 4×4. Accepts the
    /// object-benchmark key `Tr_velo_to_cam` and the odometry key `Tr`.
    pub fn lidar_to_cam(&self, path: &Path) -> Result<Matrix4<f64>> {
        let vals = self
            .get("Tr_velo_to_cam")
            .or_else(|| self.get("Tr"))
            .ok_or_else(|| Error::format(path, "missing Tr_velo_to_cam / Tr entry"))?;
        mat4_from_3x4(vals, path, "Tr")
    }

    /// The rectifying rotation as a homogeneous 4×4; identity if absent.
    pub fn rectification(&self, path: &Path) -> Result<Matrix4<f64>> {
        match self.get("R0_rect").or_else(|| self.get("R_rect")) {
            Some(vals) => {
                if vals.len() != 9 {
                    return Err(Error::format(
                        path,
                        format!("R0_rect has {} values, expected 9", vals.len()),
                    ));
                }
                let mut m = Matrix4::identity();
                for r in 0..3 {
                    for c in 0..3 {
                        m[(r, c)] = vals[r * 3 + c];
                    }
                }
                Ok(m)
            }
            None => Ok(Matrix4::identity()),
        }
    }
}

fn mat4_from_3x4(vals: &[f64], path: &Path, key: &str) -> Result<Matrix4<f64>> {
    if vals.len() != 12 {
        return Err(Error::format(
            path,
            format!("{key} has {} values, expected 12", vals.len()),
        ));
    }
    let mut m = Matrix4::identity();
    for r in 0..3 {
        for c in 0..4 {
            m[(r, c)] = vals[r * 4 + c];
        }
    }
    Ok(m)
}

/// Parse a `key: v0 v1 …` calibration file.
pub fn read_calib_file(path: impl AsRef<Path>) -> Result<CalibFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| {
            Error::format(path, format!("line {}: missing ':' separator", lineno + 1))
        })?;
        let vals: std::result::Result<Vec<f64>, _> =
            rest.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| {
            Error::format(path, format!("line {}: bad number: {e}", lineno + 1))
        })?;
        entries.insert(key.trim().to_string(), vals);
    }
    Ok(CalibFile { entries })
}

/// Read odometry poses and re-express them in the LiDAR frame.
///
/// Each input line is a camera-frame pose `P_cam` (row-major 3×4). With the
/// LiDAR-to-camera extrinsic `Tr`, the returned pose is
/// `P_lidar = Tr⁻¹ · P_cam · Tr`, mapping LiDAR-frame points of the scan to
/// the world (first-scan LiDAR) frame.
pub fn read_poses(poses_path: impl AsRef<Path>, calib_path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let poses_path = poses_path.as_ref();
    let calib_path = calib_path.as_ref();
    let calib = read_calib_file(calib_path)?;
    let tr = calib.lidar_to_cam(calib_path)?;
    let tr_inv = tr
        .try_inverse()
        .ok_or_else(|| Error::format(calib_path, "Tr extrinsic is singular"))?;

    let text = fs::read_to_string(poses_path).map_err(|e| Error::io(poses_path, e))?;
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| {
            Error::format(poses_path, format!("line {}: bad number: {e}", lineno + 1))
        })?;
        if vals.len() != 12 {
            return Err(Error::format(
                poses_path,
                format!("line {}: {} values, expected 12", lineno + 1, vals.len()),
            ));
        }
        let p_cam = mat4_from_3x4(&vals, poses_path, "pose")?;
        let p_lidar = tr_inv * p_cam * tr;
        let pose = Pose::new(
            p_lidar.fixed_view::<3, 3>(0, 0).into_owned(),
            Vector3::new(p_lidar[(0, 3)], p_lidar[(1, 3)], p_lidar[(2, 3)]),
        )
        .map_err(|e| {
            Error::format(
                poses_path,
                format!("line {}: pose not rigid after conversion: {e}", lineno + 1),
            )
        })?;
        poses.push(pose);
    }
    Ok(poses)
}

/// [`read_kitti_objects_filtered`] with the default class set `{"Car"}`.
pub fn read_kitti_objects(
    label_path: impl AsRef<Path>,
    calib_path: impl AsRef<Path>,
) -> Result<Vec<ObjectBox3D>> {
    let classes: BTreeSet<String> = ["Car".to_string()].into();
    read_kitti_objects_filtered(label_path, calib_path, &classes)
}

/// Parse a KITTI object label file and convert the boxes to the LiDAR frame.
///
/// Input lines use the standard 15-field format: type, truncated, occluded,
/// alpha, 2D bbox (x1 y1 x2 y2), dimensions (h w l), rectified-camera
/// location (bottom center), and rotation_y. The returned center is the
/// geometric box center (bottom center lifted by h/2); yaw is the heading
/// about the LiDAR vertical axis. Only lines whose type is in `classes` are
/// returned.
pub fn read_kitti_objects_filtered(
    label_path: impl AsRef<Path>,
    calib_path: impl AsRef<Path>,
    classes: &BTreeSet<String>,
) -> Result<Vec<ObjectBox3D>> {
    let label_path = label_path.as_ref();
    let calib_path = calib_path.as_ref();
    let calib = read_calib_file(calib_path)?;
    let cam_from_lidar = calib.rectification(calib_path)? * calib.lidar_to_cam(calib_path)?;
    let lidar_from_cam = cam_from_lidar
        .try_inverse()
        .ok_or_else(|| Error::format(calib_path, "rectified extrinsic is singular"))?;
    let rot_lidar_from_cam = lidar_from_cam.fixed_view::<3, 3>(0, 0).into_owned();

    let text = fs::read_to_string(label_path).map_err(|e| Error::io(label_path, e))?;
    let mut boxes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 15 {
            return Err(Error::format(
                label_path,
                format!("line {}: {} fields, expected 15", lineno + 1, fields.len()),
            ));
        }
        let class_name = fields[0].to_string();
        if !classes.contains(&class_name) {
            continue;
        }
        let num = |idx: usize| -> Result<f64> {
            fields[idx].parse::<f64>().map_err(|e| {
                Error::format(
                    label_path,
                    format!("line {}: field {}: bad number: {e}", lineno + 1, idx),
                )
            })
        };
        let truncated = num(1)?;
        let occluded = num(2)? as i64;
        let (y1, y2) = (num(5)?, num(7)?);
        let (h, w, l) = (num(8)?, num(9)?, num(10)?);
        let loc_cam = Vector4::new(num(11)?, num(12)?, num(13)?, 1.0);
        let ry = num(14)?;

        let bottom = lidar_from_cam * loc_cam;
        // heading of the box length axis in rectified camera coordinates
        let dir_cam = Vector3::new(ry.cos(), 0.0, -ry.sin());
        let dir = rot_lidar_from_cam * dir_cam;
        let object = ObjectBox3D {
            center: Point3::new(bottom.x, bottom.y, bottom.z + h / 2.0),
            length: l,
            width: w,
            height: h,
            yaw: wrap_angle(dir.y.atan2(dir.x)),
            class_name,
            truncated,
            occluded: occluded.clamp(0, 3) as u8,
            image_bbox_height: y2 - y1,
        };
        object.validate().map_err(|e| {
            Error::format(label_path, format!("line {}: {e}", lineno + 1))
        })?;
        boxes.push(object);
    }
    Ok(boxes)
}

/// Write boxes back out in the KITTI label format, converting to the
/// rectified camera frame with `calib`.
///
/// The 2D bbox is emitted as `0 0 0 image_bbox_height` (the image-plane box
/// cannot be reconstructed from LiDAR geometry); alpha is recomputed from the
/// converted location and rotation.
pub fn write_kitti_objects(
    path: impl AsRef<Path>,
    boxes: &[ObjectBox3D],
    calib_path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let calib_path = calib_path.as_ref();
    let calib = read_calib_file(calib_path)?;
    let cam_from_lidar = calib.rectification(calib_path)? * calib.lidar_to_cam(calib_path)?;
    let rot_cam_from_lidar = cam_from_lidar.fixed_view::<3, 3>(0, 0).into_owned();

    let mut out = String::new();
    for b in boxes {
        let bottom = Vector4::new(b.center.x, b.center.y, b.center.z - b.height / 2.0, 1.0);
        let loc = cam_from_lidar * bottom;
        let dir = rot_cam_from_lidar * Vector3::new(b.yaw.cos(), b.yaw.sin(), 0.0);
        let ry = wrap_angle((-dir.z).atan2(dir.x));
        let alpha = wrap_angle(ry - loc.x.atan2(loc.z));
        writeln!(
            out,
            "{} {:.2} {} {:.6} 0.00 0.00 0.00 {:.2} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            b.class_name,
            b.truncated,
            b.occluded,
            alpha,
            b.image_bbox_height,
            b.height,
            b.width,
            b.length,
            loc.x,
            loc.y,
            loc.z,
            ry
        )
        .expect("write to string");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
