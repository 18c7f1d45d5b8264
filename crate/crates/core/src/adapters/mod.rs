//! Conversion of heterogeneous ground truths into count-labelled records,
//! plus patching, augmentation and input normalization.

mod augment;
mod layouts;
pub mod mask;
mod patch;
mod points;
mod preprocess;
mod stats;

use image::RgbImage;

use crate::manifest::Record;

pub use augment::{augment, Transform};
pub use layouts::{adapt_dataset, AdaptConfig, Layout};
pub use mask::{
    connected_components, count_from_mask, count_from_mask_with, distance_transform, watershed_markers, MaskImage,
    WatershedConfig,
};
pub use patch::{grid_bounds, patch_image};
pub use points::{count_from_points, rasterize_points, PointAnnotation};
pub use preprocess::{preprocess, preprocess_to, resize_bilinear, unnormalize, NormalizationStats, INPUT_SIZE};
pub use stats::{compute_dataset_stats, stats_of_images, ChannelSums};

/// An image held in memory together with its record.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub record: Record,
    pub image: RgbImage,
}
