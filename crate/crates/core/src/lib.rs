//! maskbev-core — deterministic building blocks for BEV mask-based vehicle
//! detection pipelines on LiDAR data.
//!
//! The crate covers the data path around a mask-predicting detector without
//! any learned components:
//!
//! * [`dataset_io`] — KITTI / SemanticKITTI on-disk formats, poses, crops.
//! * [`pillar_encoder`] — 2D pillar voxelization, per-point featurization and
//!   the scatter to a BEV tensor.
//! * [`mask_gt`] — complete BEV instance-footprint mask labels from bounding
//!   boxes or from aggregated semantic scans, plus binary morphology and the
//!   RLE label file format.
//! * [`augmentation`] — seeded, reproducible training-time transforms over
//!   scans and their labels.
//! * [`set_matching`] — mask IoU, Hungarian assignment and the set-prediction
//!   training loss with `no_object` handling.
//! * [`evaluation`] — greedy detection matching, AP/mAP/mIoU, KITTI difficulty
//!   buckets and footprint-completion statistics.
//! * [`synthetic`] — small synthetic scenes and sequences for tests and demos.
//!
//! Everything is deterministic given its inputs (and a seed where one is
//! taken); all types are immutable after construction and safe to share
//! across threads.

pub use nalgebra;

pub mod augmentation;
pub mod dataset_io;
pub mod error;
pub mod evaluation;
pub mod mask_gt;
pub mod pillar_encoder;
pub mod set_matching;
pub mod synthetic;

pub use error::{Error, Result};
