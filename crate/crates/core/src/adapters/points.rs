use image::{DynamicImage, GrayImage, Luma};

use crate::error::{input, Result};

/// Nonzero pixels of a point annotation, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointAnnotation {
    pub count: usize,
    pub points: Vec<[f64; 2]>,
}

/// Counts annotated pixels; a pixel is set when any colour channel is nonzero.
pub fn count_from_points(annotation: &DynamicImage) -> PointAnnotation {
    let rgb = annotation.to_rgb8();
    let points: Vec<[f64; 2]> = rgb
        .enumerate_pixels()
        .filter(|(_, _, p)| p.0.iter().any(|&c| c > 0))
        .map(|(x, y, _)| [x as f64, y as f64])
        .collect();
    PointAnnotation { count: points.len(), points }
}

/// Marks the pixel owning each centroid. Fails if two centroids share a
/// pixel or one falls outside the image, since the count would not survive.
pub fn rasterize_points(width: u32, height: u32, centroids: &[[f64; 2]]) -> Result<GrayImage> {
    let mut img = GrayImage::new(width, height);
    for c in centroids {
        let (x, y) = (c[0].round(), c[1].round());
        if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
            return Err(input(format!("centroid ({}, {}) outside {width}x{height}", c[0], c[1])));
        }
        let px = img.get_pixel_mut(x as u32, y as u32);
        if px.0[0] != 0 {
            return Err(input(format!("two centroids share pixel ({x}, {y})")));
        }
        *px = Luma([255]);
    }
    Ok(img)
}
