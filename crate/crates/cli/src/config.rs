//! Toolkit configuration: a TOML file with one section per subsystem.
//! Every field has a default matching the shipped pipeline values, so an
//! empty (or absent) file is a complete configuration.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use maskbev_core::augmentation::AugmentationConfig;
use maskbev_core::dataset_io::{CropRegion, DEFAULT_VEHICLE_CLASSES, DEFAULT_Z_RANGE};
use maskbev_core::evaluation::{ApMode, EvalConfig, MiouMode};
use maskbev_core::mask_gt::{MaskGenParams, DEFAULT_MIN_AREA_PIXELS};
use maskbev_core::pillar_encoder::{
    DistanceMode, GridConfig, PillarReduction, Sampling, DEFAULT_MAX_POINTS_PER_VOXEL,
    DEFAULT_VOXEL_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Dataset {
    Kitti,
    Semantickitti,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    /// BEV grid override; defaults to the dataset's grid.
    pub grid: Option<GridSection>,
    /// Crop override; defaults to the dataset's crop region.
    pub crop: Option<CropSection>,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub maskgen: MaskGenSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub io: IoSection,
    /// Worker threads; 0 picks the machine default.
    #[serde(default)]
    pub workers: usize,
    /// Semantic class ids treated as static vehicles.
    #[serde(default = "default_vehicle_classes")]
    pub vehicle_classes: Vec<u16>,
}

fn default_vehicle_classes() -> Vec<u16> {
    DEFAULT_VEHICLE_CLASSES.to_vec()
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        Self {
            grid: None,
            crop: None,
            encoder: EncoderSection::default(),
            maskgen: MaskGenSection::default(),
            augment: AugmentSection::default(),
            eval: EvalSection::default(),
            io: IoSection::default(),
            workers: 0,
            vehicle_classes: default_vehicle_classes(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default = "default_z_min")]
    pub z_min: f64,
    #[serde(default = "default_z_max")]
    pub z_max: f64,
    #[serde(default = "default_voxel_size")]
    pub voxel_size: f64,
    #[serde(default = "default_max_points")]
    pub max_points_per_voxel: usize,
}

fn default_z_min() -> f64 {
    DEFAULT_Z_RANGE.0
}
fn default_z_max() -> f64 {
    DEFAULT_Z_RANGE.1
}
fn default_voxel_size() -> f64 {
    DEFAULT_VOXEL_SIZE
}
fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS_PER_VOXEL
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct CropSection {
    pub mode: CropModeName,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub radius: Option<f64>,
    #[serde(default = "default_z_min")]
    pub z_min: f64,
    #[serde(default = "default_z_max")]
    pub z_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CropModeName {
    AxisAligned,
    Radial,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub sampling: SamplingName,
    pub sampling_seed: u64,
    pub reduction: ReductionName,
    pub distance: DistanceName,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            sampling: SamplingName::FirstK,
            sampling_seed: 0,
            reduction: ReductionName::Max,
            distance: DistanceName::PillarCenter2d,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SamplingName {
    FirstK,
    SeededRandom,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ReductionName {
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DistanceName {
    PillarCenter2d,
    PillarCenter3d,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MaskGenSection {
    pub closing_kernel: usize,
    pub opening_kernel: usize,
    pub min_area_pixels: usize,
    pub presence_filter: bool,
}

impl Default for MaskGenSection {
    fn default() -> Self {
        Self {
            closing_kernel: 3,
            opening_kernel: 3,
            min_area_pixels: DEFAULT_MIN_AREA_PIXELS,
            presence_filter: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub drop_fraction: f64,
    pub flip_y: bool,
    pub point_noise_sigma: f64,
    pub global_translate_max: f64,
    pub global_rotate_max_deg: f64,
    pub instance_translate_max: f64,
    pub instance_rotate_max_deg: f64,
    pub paste_max_instances: usize,
    pub seed: u64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentationConfig::default();
        Self {
            drop_fraction: d.drop_fraction,
            flip_y: d.flip_y,
            point_noise_sigma: d.point_noise_sigma,
            global_translate_max: d.global_translate_max,
            global_rotate_max_deg: d.global_rotate_max_deg,
            instance_translate_max: d.instance_translate_max,
            instance_rotate_max_deg: d.instance_rotate_max_deg,
            paste_max_instances: d.paste_max_instances,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub thresholds: Vec<f64>,
    pub map_ladder: Vec<f64>,
    pub ap_mode: ApModeName,
    pub miou_mode: MiouModeName,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalConfig::default();
        Self {
            thresholds: d.ap_thresholds,
            map_ladder: d.map_ladder,
            ap_mode: ApModeName::AllPoint,
            miou_mode: MiouModeName::TpMean,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
#[allow(clippy::enum_variant_names)] // names mirror the interpolation modes
pub enum ApModeName {
    AllPoint,
    ElevenPoint,
    FortyPoint,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MiouModeName {
    TpMean,
    GtMean,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Default dataset root when the command line omits --root.
    pub dataset_root: Option<String>,
    /// Default output directory when the command line omits --out.
    pub out_dir: Option<String>,
}

impl ToolkitConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let config: ToolkitConfig = toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?;
                Ok(config)
            }
        }
    }

    /// Hash of the normalized (re-serialized) configuration: stable across
    /// formatting and comment changes, sensitive to any field change.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        crate::manifest::sha256_hex(canonical.as_bytes())
    }

    pub fn grid_for(&self, dataset: Dataset) -> anyhow::Result<GridConfig> {
        match &self.grid {
            Some(g) => Ok(GridConfig::new(
                g.x_min,
                g.x_max,
                g.y_min,
                g.y_max,
                g.z_min,
                g.z_max,
                g.voxel_size,
                g.max_points_per_voxel,
            )?),
            None => Ok(match dataset {
                Dataset::Kitti => GridConfig::kitti(),
                Dataset::Semantickitti => GridConfig::semantickitti(),
            }),
        }
    }

    pub fn crop_for(&self, dataset: Dataset) -> anyhow::Result<CropRegion> {
        match &self.crop {
            Some(c) => match c.mode {
                CropModeName::AxisAligned => {
                    let take = |v: Option<f64>, name: &str| {
                        v.ok_or_else(|| anyhow::anyhow!("crop.{name} required for axis_aligned"))
                    };
                    Ok(CropRegion::axis_aligned(
                        take(c.x_min, "x_min")?,
                        take(c.x_max, "x_max")?,
                        take(c.y_min, "y_min")?,
                        take(c.y_max, "y_max")?,
                        c.z_min,
                        c.z_max,
                    )?)
                }
                CropModeName::Radial => {
                    let radius = c
                        .radius
                        .ok_or_else(|| anyhow::anyhow!("crop.radius required for radial"))?;
                    Ok(CropRegion::radial(radius, c.z_min, c.z_max)?)
                }
            },
            None => Ok(match dataset {
                Dataset::Kitti => CropRegion::kitti_default(),
                Dataset::Semantickitti => CropRegion::semantickitti_default(),
            }),
        }
    }

    pub fn mask_params(&self) -> anyhow::Result<MaskGenParams> {
        let params = MaskGenParams {
            closing_kernel: self.maskgen.closing_kernel,
            opening_kernel: self.maskgen.opening_kernel,
            min_area_pixels: self.maskgen.min_area_pixels,
            presence_filter: self.maskgen.presence_filter,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn augmentation(&self, seed_override: Option<u64>) -> AugmentationConfig {
        let a = &self.augment;
        AugmentationConfig {
            drop_fraction: a.drop_fraction,
            flip_y: a.flip_y,
            point_noise_sigma: a.point_noise_sigma,
            global_translate_max: a.global_translate_max,
            global_rotate_max_deg: a.global_rotate_max_deg,
            instance_translate_max: a.instance_translate_max,
            instance_rotate_max_deg: a.instance_rotate_max_deg,
            paste_max_instances: a.paste_max_instances,
            seed: seed_override.unwrap_or(a.seed),
        }
    }

    pub fn eval_config(&self) -> anyhow::Result<EvalConfig> {
        for t in self.eval.thresholds.iter().chain(&self.eval.map_ladder) {
            if !(*t > 0.0 && *t <= 1.0) {
                bail!("eval threshold {t} outside (0, 1]");
            }
        }
        Ok(EvalConfig {
            ap_thresholds: self.eval.thresholds.clone(),
            map_ladder: self.eval.map_ladder.clone(),
            ap_mode: match self.eval.ap_mode {
                ApModeName::AllPoint => ApMode::AllPoint,
                ApModeName::ElevenPoint => ApMode::ElevenPoint,
                ApModeName::FortyPoint => ApMode::FortyPoint,
            },
            miou_mode: match self.eval.miou_mode {
                MiouModeName::TpMean => MiouMode::TpMean,
                MiouModeName::GtMean => MiouMode::GtMean,
            },
        })
    }

    pub fn sampling(&self) -> Sampling {
        match self.encoder.sampling {
            SamplingName::FirstK => Sampling::FirstK,
            SamplingName::SeededRandom => Sampling::SeededRandom(self.encoder.sampling_seed),
        }
    }

    pub fn reduction(&self) -> PillarReduction {
        match self.encoder.reduction {
            ReductionName::Max => PillarReduction::Max,
            ReductionName::Mean => PillarReduction::Mean,
        }
    }

    pub fn distance_mode(&self) -> DistanceMode {
        match self.encoder.distance {
            DistanceName::PillarCenter2d => DistanceMode::PillarCenter2d,
            DistanceName::PillarCenter3d => DistanceMode::PillarCenter3d,
        }
    }

    pub fn vehicle_class_set(&self) -> BTreeSet<u16> {
        self.vehicle_classes.iter().copied().collect()
    }
}
