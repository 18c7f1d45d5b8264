use image::RgbImage;

use super::preprocess::NormalizationStats;
use crate::error::{config, input, Error, Result};
use crate::manifest::Manifest;

/// Exact per-channel pixel sums; merging is associative and commutative,
/// so the result does not depend on record order or thread count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChannelSums {
    pub pixels: u64,
    pub sum: [u64; 3],
    pub sum_sq: [u128; 3],
}

impl ChannelSums {
    pub fn of(img: &RgbImage) -> Self {
        let mut s = Self { pixels: (img.width() * img.height()) as u64, ..Default::default() };
        for p in img.pixels() {
            for c in 0..3 {
                let v = p.0[c] as u64;
                s.sum[c] += v;
                s.sum_sq[c] += (v * v) as u128;
            }
        }
        s
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.pixels += other.pixels;
        for c in 0..3 {
            self.sum[c] += other.sum[c];
            self.sum_sq[c] += other.sum_sq[c];
        }
        self
    }

    pub fn stats(&self) -> Result<NormalizationStats> {
        if self.pixels == 0 {
            return Err(input("no pixels to compute statistics over"));
        }
        let n = self.pixels as u128;
        let mut out = NormalizationStats { mean: [0.0; 3], std: [0.0; 3] };
        for c in 0..3 {
            let s = self.sum[c] as u128;
            // n²·var in integer arithmetic, exact.
            let scaled_var = n * self.sum_sq[c] - s * s;
            out.mean[c] = s as f64 / n as f64 / 255.0;
            out.std[c] = (scaled_var as f64).sqrt() / n as f64 / 255.0;
        }
        if let Some(c) = (0..3).find(|&c| out.std[c] == 0.0) {
            return Err(config(format!("channel {c} is constant over the dataset; cannot normalize")));
        }
        Ok(out)
    }
}

pub fn stats_of_images<'a>(images: impl IntoIterator<Item = &'a RgbImage>) -> Result<NormalizationStats> {
    images.into_iter().map(ChannelSums::of).fold(ChannelSums::default(), ChannelSums::merge).stats()
}

/// Mean and standard deviation over every image in `manifest`; pass the
/// training split only.
pub fn compute_dataset_stats(manifest: &Manifest) -> Result<NormalizationStats> {
    if manifest.is_empty() {
        return Err(input("cannot compute statistics of an empty manifest"));
    }
    let sums = microcount_tensor::par::map_slice(&manifest.records, |r| -> Result<ChannelSums> {
        let path = manifest.image_path(r);
        let img = image::open(&path).map_err(|source| Error::Image { path, source })?;
        Ok(ChannelSums::of(&img.to_rgb8()))
    });
    let mut total = ChannelSums::default();
    for s in sums {
        total = total.merge(s?);
    }
    total.stats()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn uniform_gray_has_zero_std() {
        let img = RgbImage::from_pixel(4, 4, Rgb([128; 3]));
        let sums = ChannelSums::of(&img);
        assert!((sums.sum[0] as f64 / 16.0 / 255.0 - 0.50196).abs() < 1e-4);
        assert!(matches!(stats_of_images([&img]), Err(Error::Config(_))));
    }

    #[test]
    fn black_and_white_average_to_half() {
        let a = RgbImage::from_pixel(3, 3, Rgb([0; 3]));
        let b = RgbImage::from_pixel(3, 3, Rgb([255; 3]));
        let s = stats_of_images([&a, &b]).unwrap();
        assert_eq!(s.mean, [0.5; 3]);
        assert_eq!(s.std, [0.5; 3]);
        assert_eq!(stats_of_images([&b, &a]).unwrap(), s);
    }
}
