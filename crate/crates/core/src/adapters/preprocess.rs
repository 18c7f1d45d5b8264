use image::{Rgb, RgbImage};
use microcount_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Side length every backbone consumes.
pub const INPUT_SIZE: usize = 384;

/// Per-channel mean and standard deviation of pixel values scaled to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormalizationStats {
    pub fn validate(&self) -> Result<()> {
        for c in 0..3 {
            if !(self.std[c] > 0.0 && self.std[c].is_finite()) {
                return Err(config(format!("channel {c} has standard deviation {}", self.std[c])));
            }
            if !self.mean[c].is_finite() {
                return Err(config(format!("channel {c} has mean {}", self.mean[c])));
            }
        }
        Ok(())
    }
}

/// Bilinear resampling with pixel centres aligned (half-pixel offsets) and
/// edge clamping, on interleaved channels.
pub fn resize_bilinear(src: &[f32], w: usize, h: usize, ow: usize, oh: usize) -> Vec<f32> {
    let sx = w as f64 / ow as f64;
    let sy = h as f64 / oh as f64;
    let taps = |o: usize, scale: f64, n: usize| {
        let f = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (f - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..ow).map(|x| taps(x, sx, w)).collect();
    let mut out = vec![0.0f32; ow * oh * 3];
    for y in 0..oh {
        let (y0, y1, ty) = taps(y, sy, h);
        for (x, &(x0, x1, tx)) in cols.iter().enumerate() {
            for c in 0..3 {
                let at = |xx: usize, yy: usize| src[(yy * w + xx) * 3 + c];
                let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
                let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
                out[(y * ow + x) * 3 + c] = top * (1.0 - ty) + bottom * ty;
            }
        }
    }
    out
}

/// Resizes to `INPUT_SIZE` and normalizes into a `[3, S, S]` tensor.
pub fn preprocess(img: &RgbImage, stats: &NormalizationStats) -> Result<Tensor> {
    preprocess_to(img, stats, INPUT_SIZE)
}

pub fn preprocess_to(img: &RgbImage, stats: &NormalizationStats, size: usize) -> Result<Tensor> {
    stats.validate()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 || size == 0 {
        return Err(config("cannot preprocess an empty image"));
    }
    let raw: Vec<f32> = img.as_raw().iter().map(|&v| v as f32).collect();
    let pixels = if (w, h) == (size, size) { raw } else { resize_bilinear(&raw, w, h, size, size) };
    let plane = size * size;
    let mut data = vec![0.0f32; 3 * plane];
    for c in 0..3 {
        let (m, s) = (stats.mean[c] as f32, stats.std[c] as f32);
        for i in 0..plane {
            data[c * plane + i] = (pixels[i * 3 + c] / 255.0 - m) / s;
        }
    }
    Ok(Tensor::from_vec([3, size, size], data)?)
}

/// Inverse of the normalization step, rounded back to 8 bits.
pub fn unnormalize(t: &Tensor, stats: &NormalizationStats) -> Result<RgbImage> {
    let &[c, h, w] = t.shape() else {
        return Err(config(format!("expected a [3, H, W] tensor, got {:?}", t.shape())));
    };
    if c != 3 {
        return Err(config(format!("expected 3 channels, got {c}")));
    }
    let plane = h * w;
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb(std::array::from_fn(|k| {
            let v = (d[k * plane + i] * stats.std[k] as f32 + stats.mean[k] as f32) * 255.0;
            v.round().clamp(0.0, 255.0) as u8
        }))
    }))
}
