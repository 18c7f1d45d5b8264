use image::{imageops, RgbImage};

use super::patch::join_lineage;
use super::Sample;

/// Count-preserving dihedral transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    Identity,
    FlipHorizontal,
    FlipVertical,
    /// Quarter turns counter-clockwise.
    Rotate90,
    Rotate180,
    Rotate270,
}

impl Transform {
    pub const ALL: [Transform; 6] = [
        Transform::Identity,
        Transform::FlipHorizontal,
        Transform::FlipVertical,
        Transform::Rotate90,
        Transform::Rotate180,
        Transform::Rotate270,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Transform::Identity => "orig",
            Transform::FlipHorizontal => "hflip",
            Transform::FlipVertical => "vflip",
            Transform::Rotate90 => "rot90",
            Transform::Rotate180 => "rot180",
            Transform::Rotate270 => "rot270",
        }
    }

    /// Where point `(x, y)` of a `w × h` image ends up.
    pub fn map_point(self, p: [f64; 2], w: u32, h: u32) -> [f64; 2] {
        let (w1, h1) = ((w - 1) as f64, (h - 1) as f64);
        let [x, y] = p;
        match self {
            Transform::Identity => [x, y],
            Transform::FlipHorizontal => [w1 - x, y],
            Transform::FlipVertical => [x, h1 - y],
            Transform::Rotate90 => [y, w1 - x],
            Transform::Rotate180 => [w1 - x, h1 - y],
            Transform::Rotate270 => [h1 - y, x],
        }
    }

    pub fn apply_image(self, img: &RgbImage) -> RgbImage {
        match self {
            Transform::Identity => img.clone(),
            Transform::FlipHorizontal => imageops::flip_horizontal(img),
            Transform::FlipVertical => imageops::flip_vertical(img),
            // The image crate turns clockwise.
            Transform::Rotate90 => imageops::rotate270(img),
            Transform::Rotate180 => imageops::rotate180(img),
            Transform::Rotate270 => imageops::rotate90(img),
        }
    }

    pub fn apply(self, sample: &Sample) -> Sample {
        let (w, h) = sample.image.dimensions();
        let mut record = sample.record.clone();
        if let Some(c) = &mut record.centroids {
            c.iter_mut().for_each(|p| *p = self.map_point(*p, w, h));
        }
        if self != Transform::Identity {
            let stem = record.image.trim_end_matches(".png");
            record.image = format!("{stem}_{}.png", self.tag());
            record.lineage = Some(join_lineage(&sample.record, self.tag()));
        }
        Sample { record, image: self.apply_image(&sample.image) }
    }
}

/// The original sample followed by its five transformed copies.
pub fn augment(sample: &Sample) -> Vec<Sample> {
    Transform::ALL.iter().map(|t| t.apply(sample)).collect()
}
