//! Qualitative BEV renderings: grayscale occupancy with colored mask
//! overlays, deterministic down to the byte.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::dataset_io::PointCloud;
use crate::error::{Error, Result};
use crate::mask_gt::{BinaryMask, InstanceMaskSet};
use crate::pillar_encoder::GridConfig;

/// Deterministic instance color from its id.
fn instance_color(id: u32) -> Rgb<u8> {
    let mut x = id as u64;
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^= x >> 31;
    // keep channels bright enough to read over the occupancy layer
    Rgb([
        64 + (x & 0xBF) as u8,
        64 + ((x >> 8) & 0xBF) as u8,
        64 + ((x >> 16) & 0xBF) as u8,
    ])
}

/// Render point occupancy with per-instance tinted masks. Image x is the
/// grid column; image y runs top-down with the highest row at the top.
pub fn render_overlay(
    cloud: &PointCloud,
    masks: &[(u32, &BinaryMask)],
    grid: &GridConfig,
) -> RgbImage {
    let (w, h) = (grid.width(), grid.height());
    let mut counts = vec![0u32; w * h];
    for p in cloud.points() {
        if p.z < grid.z_min || p.z >= grid.z_max {
            continue;
        }
        if let Some((col, row)) = grid.world_to_pixel(p.x, p.y) {
            counts[row * w + col] += 1;
        }
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for row in 0..h {
        for col in 0..w {
            let c = counts[row * w + col];
            let gray = if c == 0 { 0 } else { (80 + 40 * c.min(4)) as u8 };
            img.put_pixel(col as u32, (h - 1 - row) as u32, Rgb([gray, gray, gray]));
        }
    }
    for (id, mask) in masks {
        let tint = instance_color(*id);
        for (row, col) in mask.set_pixels() {
            let px = img.get_pixel_mut(col as u32, (h - 1 - row) as u32);
            for ch in 0..3 {
                px.0[ch] = (px.0[ch] / 2).saturating_add(tint.0[ch] / 2);
            }
        }
    }
    img
}

/// [`render_overlay`] over a label set's entries.
pub fn render_overlay_set(cloud: &PointCloud, set: &InstanceMaskSet) -> RgbImage {
    let masks: Vec<(u32, &BinaryMask)> = set
        .entries
        .iter()
        .map(|e| (e.instance_id, &e.mask))
        .collect();
    render_overlay(cloud, &masks, &set.grid)
}

pub fn write_overlay_png(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    image
        .save(path)
        .map_err(|e| Error::format(path, format!("png encode failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn grid() -> GridConfig {
        GridConfig::new(0.0, 3.2, 0.0, 3.2, -1.0, 1.0, 0.16, 32).unwrap()
    }

    #[test]
    fn empty_masks_render_pure_occupancy() {
        let g = grid();
        let cloud = PointCloud::new(vec![Point3::new(0.4, 0.4, 0.0)], None).unwrap();
        let img = render_overlay(&cloud, &[], &g);
        let (col, row) = g.world_to_pixel(0.4, 0.4).unwrap();
        let px = img.get_pixel(col as u32, (g.height() - 1 - row) as u32);
        assert_eq!(px.0[0], px.0[1]);
        assert_eq!(px.0[1], px.0[2]);
        assert!(px.0[0] > 0);
    }

    #[test]
    fn mask_pixels_are_tinted() {
        let g = grid();
        let mut mask = BinaryMask::empty(g);
        mask.set(5, 5, true);
        let img = render_overlay(&PointCloud::empty(), &[(3, &mask)], &g);
        let px = img.get_pixel(5, (g.height() - 1 - 5) as u32);
        assert_ne!(px.0, [0, 0, 0]);
        // untouched pixel stays black
        assert_eq!(img.get_pixel(0, 0).0, [0, 0, 0]);
    }

    #[test]
    fn rendering_is_deterministic() {
        let g = grid();
        let cloud = PointCloud::new(
            vec![Point3::new(1.0, 1.0, 0.0), Point3::new(2.0, 2.5, 0.0)],
            None,
        )
        .unwrap();
        let mut mask = BinaryMask::empty(g);
        mask.set(6, 6, true);
        mask.set(6, 7, true);
        let a = render_overlay(&cloud, &[(1, &mask)], &g);
        let b = render_overlay(&cloud, &[(1, &mask)], &g);
        assert_eq!(a.as_raw(), b.as_raw());
    }
}
