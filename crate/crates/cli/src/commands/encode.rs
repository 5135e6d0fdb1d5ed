//! `encode`: one scan → BEVT tensor file.

use std::path::PathBuf;

use anyhow::Context;

use maskbev_core::dataset_io::{crop_point_cloud, read_point_cloud};
use maskbev_core::pillar_encoder::{featurize_with, reduce_pillars, scatter_to_bev, voxelize};

use crate::config::{Dataset, ToolkitConfig};

pub struct EncodeArgs {
    pub scan: PathBuf,
    pub out: PathBuf,
    pub dataset: Dataset,
}

pub fn run(args: &EncodeArgs, config: &ToolkitConfig) -> anyhow::Result<u8> {
    let grid = config.grid_for(args.dataset)?;
    let crop = config.crop_for(args.dataset)?;
    let cloud = read_point_cloud(&args.scan)?;
    let cloud = crop_point_cloud(&cloud, &crop);

    let pillars = voxelize(&cloud, &grid, config.sampling());
    let features = featurize_with(&cloud, &pillars, config.distance_mode());
    let reduced = reduce_pillars(&features, config.reduction());
    let tensor = scatter_to_bev(&pillars, &reduced)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    tensor.write(&args.out)?;
    log::info!(
        "encoded {} -> {} ({}x{}x{})",
        args.scan.display(),
        args.out.display(),
        tensor.channels(),
        grid.height(),
        grid.width()
    );
    Ok(0)
}
