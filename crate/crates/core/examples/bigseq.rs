use maskbev_core::dataset_io::Pose;
use maskbev_core::nalgebra::{Matrix3, Vector3};
use maskbev_core::synthetic::{build_sequence, Half, SyntheticCar, Visibility};

fn main() {
    let root = std::path::Path::new("/tmp/bigseq");
    let _ = std::fs::remove_dir_all(root);
    let cars: Vec<SyntheticCar> = (0..8)
        .map(|i| {
            let a = i as f64 * 0.7853;
            SyntheticCar::new(14.0 * a.cos(), 14.0 * a.sin(), a * 0.5)
        })
        .collect();
    let poses: Vec<Pose> = (0..60)
        .map(|k| {
            let yaw = k as f64 * 0.01;
            let rot = Matrix3::new(
                yaw.cos(), -yaw.sin(), 0.0,
                yaw.sin(), yaw.cos(), 0.0,
                0.0, 0.0, 1.0,
            );
            Pose::new(rot, Vector3::new(k as f64 * 0.3, k as f64 * 0.1, 0.0)).unwrap()
        })
        .collect();
    // alternate half views per scan so aggregation genuinely completes them
    let visibility: Vec<Vec<Visibility>> = (0..60)
        .map(|k| {
            (0..8)
                .map(|c| {
                    if (k + c) % 3 == 0 {
                        Visibility::Half(Half::Front)
                    } else if (k + c) % 3 == 1 {
                        Visibility::Half(Half::Rear)
                    } else {
                        Visibility::Full
                    }
                })
                .collect()
        })
        .collect();
    let seq = build_sequence(&cars, &poses, &visibility).unwrap();
    seq.write_semantickitti(root, "10").unwrap();
    println!("wrote 60 scans, {} pts each", seq.scans[0].len());
}
