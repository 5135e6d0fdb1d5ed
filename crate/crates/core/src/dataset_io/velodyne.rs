//! Binary scan and label formats.
//!
//! Velodyne scans are a flat sequence of 16-byte records, four 32-bit
//! little-endian floats each: x, y, z, intensity. SemanticKITTI labels are
//! one 32-bit little-endian word per point: lower 16 bits semantic class,
//! upper 16 bits instance id.

use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

use super::{PointCloud, SemanticScan};

/// Read a Velodyne `.bin` scan. The intensity channel is always present in
/// this format and is kept.
pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::format(
            path,
            format!("file size {} is not a multiple of 16 bytes", bytes.len()),
        ));
    }
    let n = bytes.len() / 16;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(16).enumerate() {
        let x = f32::from_le_bytes(rec[0..4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(rec[4..8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(rec[8..12].try_into().unwrap()) as f64;
        let r = f32::from_le_bytes(rec[12..16].try_into().unwrap()) as f64;
        if !(x.is_finite() && y.is_finite() && z.is_finite() && r.is_finite()) {
            return Err(Error::format(path, format!("non-finite value in record {i}")));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::format(
                path,
                format!("return strength {r} out of [0, 1] in record {i}"),
            ));
        }
        points.push(Point3::new(x, y, z));
        intensity.push(r);
    }
    PointCloud::new(points, Some(intensity))
}

/// Write a cloud in the Velodyne record format. A missing intensity channel
/// is written as zeros. Coordinates are narrowed to f32 as the format
/// requires.
pub fn write_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(cloud.len() * 16);
    for (i, p) in cloud.points().iter().enumerate() {
        let r = cloud.intensity().map_or(0.0, |v| v[i]);
        for v in [p.x, p.y, p.z, r] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a SemanticKITTI `.label` file for `cloud`, splitting each word into
/// the (semantic, instance) pair.
pub fn read_semantic_labels(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<SemanticScan> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != cloud.len() * 4 {
        return Err(Error::format(
            path,
            format!(
                "label file holds {} words but the scan has {} points",
                bytes.len() / 4,
                cloud.len()
            ),
        ));
    }
    let mut semantic = Vec::with_capacity(cloud.len());
    let mut instance = Vec::with_capacity(cloud.len());
    for word in bytes.chunks_exact(4) {
        let w = u32::from_le_bytes(word.try_into().unwrap());
        semantic.push((w & 0xFFFF) as u16);
        instance.push((w >> 16) as u16);
    }
    SemanticScan::new(cloud.clone(), semantic, instance)
}

/// Write per-point labels back out as 32-bit words.
pub fn write_semantic_labels(path: impl AsRef<Path>, scan: &SemanticScan) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(scan.len() * 4);
    for i in 0..scan.len() {
        let w = ((scan.instance_id[i] as u32) << 16) | scan.semantic_id[i] as u32;
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
