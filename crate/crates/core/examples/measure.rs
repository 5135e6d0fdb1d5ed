use maskbev_core::mask_gt::*;
use maskbev_core::pillar_encoder::GridConfig;
use maskbev_core::synthetic::*;
use std::time::Instant;

fn main() {
    let grid = GridConfig::semantickitti();
    let params = MaskGenParams::default();
    let seq = sequence_half_visible();
    let classes = SyntheticSequence::vehicle_classes();
    let map = aggregate_instances(&seq.scans, &seq.poses, &classes).unwrap();
    for (i, (scan, pose)) in seq.scans.iter().zip(&seq.poses).enumerate() {
        let complete =
            generate_masks_from_instances("x", &map, scan, pose, &grid, &params).unwrap();
        for entry in &complete.entries {
            let single = single_scan_mask(scan, entry.instance_id, &grid, &params).unwrap();
            let a_c = entry.mask.area();
            let a_s = single.area();
            let rows: std::collections::BTreeSet<usize> =
                entry.mask.set_pixels().map(|(r, _)| r).collect();
            println!(
                "scan {i} inst {} single {a_s} complete {a_c} ratio {:.4} rows {}",
                entry.instance_id,
                a_s as f64 / a_c as f64,
                rows.len()
            );
        }
    }
    // time the full-grid rasterization brute force for one box
    let grid = GridConfig::kitti();
    let b = SyntheticCar::new(30.0, 5.0, 0.7).to_box();
    let t = Instant::now();
    let mut count = 0usize;
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let (x, y) = grid.pixel_to_world(col, row);
            let dx = x - b.center.x;
            let dy = y - b.center.y;
            let u = b.yaw.cos() * dx + b.yaw.sin() * dy;
            let v = -b.yaw.sin() * dx + b.yaw.cos() * dy;
            if u.abs() <= b.length / 2.0 && v.abs() <= b.width / 2.0 {
                count += 1;
            }
        }
    }
    println!("one brute-force pass: {:?} ({count} px) -> est 1000 boxes {:?}", t.elapsed(), t.elapsed() * 1000);
}
