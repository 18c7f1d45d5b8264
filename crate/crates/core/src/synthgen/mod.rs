//! Procedural fluorescent-bacteria scenes with exact count labels.
//!
//! Each bacterium is an anisotropic Gaussian splat added to a floating-point
//! accumulation canvas; the canvas is then quantized on top of a background
//! plate. Centroids are recorded at render time, so labels are exact by
//! construction.

mod background;
mod dataset;

use std::f64::consts::PI;

use image::RgbImage;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
pub(crate) use background::list_images;
pub use background::{BackgroundSource, Plate};
pub use dataset::{generate_dataset, CountDistribution, DatasetSpec};

/// Truncation radius in units of the major standard deviation.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacteriumSpec {
    /// `[x, y]` in pixels.
    pub center: [f64; 2],
    pub sigma_major: f64,
    pub sigma_minor: f64,
    /// Radians in `[0, π)`.
    pub rotation: f64,
    /// Peak RGB intensity in `[0, 1]`.
    pub peak_intensity: [f64; 3],
}

/// Closed interval `[min, max]`; a degenerate interval always yields `min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn check(&self, name: &str, lo: f64, hi: f64) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(config(format!("{name}: range [{}, {}] is not ordered", self.min, self.max)));
        }
        if self.min < lo || self.max > hi {
            return Err(config(format!("{name}: range [{}, {}] leaves [{lo}, {hi}]", self.min, self.max)));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..self.max)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamRanges {
    /// Both axis standard deviations are drawn from these; the larger becomes
    /// the major axis.
    pub sigma_a: Range,
    pub sigma_b: Range,
    pub rotation: Range,
    /// Channel carrying the fluorescence colour (0 = red, 1 = green, 2 = blue).
    pub dominant_channel: usize,
    pub dominant_intensity: Range,
    pub other_intensity: Range,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            sigma_a: Range::new(1.5, 6.0),
            sigma_b: Range::new(1.5, 6.0),
            rotation: Range::new(0.0, PI),
            dominant_channel: 1,
            dominant_intensity: Range::new(0.5, 1.0),
            other_intensity: Range::new(0.0, 0.3),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        self.sigma_a.check("sigma_a", f64::MIN_POSITIVE, f64::MAX)?;
        self.sigma_b.check("sigma_b", f64::MIN_POSITIVE, f64::MAX)?;
        self.rotation.check("rotation", 0.0, PI)?;
        self.dominant_intensity.check("dominant_intensity", 0.0, 1.0)?;
        self.other_intensity.check("other_intensity", 0.0, 1.0)?;
        if self.dominant_channel > 2 {
            return Err(config(format!("dominant_channel {} is not 0, 1 or 2", self.dominant_channel)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub target_count: usize,
    #[serde(default)]
    pub background: BackgroundSource,
    #[serde(default)]
    pub ranges: ParamRanges,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    /// Native resolution of the reference microscope.
    pub const NATIVE_WIDTH: usize = 3280;
    pub const NATIVE_HEIGHT: usize = 2464;

    pub fn new(width: usize, height: usize, target_count: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            target_count,
            background: BackgroundSource::Synthetic,
            ranges: ParamRanges::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(config("scene dimensions must be positive"));
        }
        if self.target_count > self.width * self.height {
            return Err(config(format!(
                "{} bacteria cannot have distinct centroid pixels in a {}x{} image",
                self.target_count, self.width, self.height
            )));
        }
        self.ranges.validate()
    }
}

/// `H × W × 3` floating-point accumulation buffer, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }
}

/// An 8-bit scene with its exact annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedImage {
    pub pixels: RgbImage,
    pub centroids: Vec<[f64; 2]>,
    pub count: usize,
}

/// Draws one bacterium anywhere inside the scene.
pub fn sample_bacterium(rng: &mut ChaCha8Rng, scene: &SceneConfig) -> Result<BacteriumSpec> {
    if scene.width == 0 || scene.height == 0 {
        return Err(config("scene dimensions must be positive"));
    }
    let ranges = &scene.ranges;
    ranges.validate()?;
    let center = sample_center(rng, scene);
    let a = ranges.sigma_a.sample(rng);
    let b = ranges.sigma_b.sample(rng);
    let rotation = ranges.rotation.sample(rng);
    let mut peak = [0.0; 3];
    for (c, p) in peak.iter_mut().enumerate() {
        *p = if c == ranges.dominant_channel {
            ranges.dominant_intensity.sample(rng)
        } else {
            ranges.other_intensity.sample(rng)
        };
    }
    Ok(BacteriumSpec { center, sigma_major: a.max(b), sigma_minor: a.min(b), rotation, peak_intensity: peak })
}

/// Gaussian weight of `spec` at offset `(dx, dy)` from its center.
#[inline]
pub fn gaussian_weight(spec: &BacteriumSpec, dx: f64, dy: f64) -> f64 {
    let (s, c) = spec.rotation.sin_cos();
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    let q = u * u / (spec.sigma_major * spec.sigma_major) + v * v / (spec.sigma_minor * spec.sigma_minor);
    (-0.5 * q).exp()
}

/// Adds `spec` to `canvas`, evaluating pixel centres inside the truncation box.
pub fn render_bacterium(canvas: &mut Canvas, spec: &BacteriumSpec) {
    let r = TRUNCATION_SIGMAS * spec.sigma_major;
    let [cx, cy] = spec.center;
    let x0 = (cx - r).ceil().max(0.0) as usize;
    let y0 = (cy - r).ceil().max(0.0) as usize;
    let x1 = ((cx + r).floor() as isize).min(canvas.width as isize - 1);
    let y1 = ((cy + r).floor() as isize).min(canvas.height as isize - 1);
    if x1 < 0 || y1 < 0 {
        return;
    }
    let (s, c) = spec.rotation.sin_cos();
    let (ia, ib) = (1.0 / (spec.sigma_major * spec.sigma_major), 1.0 / (spec.sigma_minor * spec.sigma_minor));
    for y in y0..=y1 as usize {
        let dy = y as f64 - cy;
        let row = &mut canvas.data[y * canvas.width * 3..(y + 1) * canvas.width * 3];
        for x in x0..=x1 as usize {
            let dx = x as f64 - cx;
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            let w = (-0.5 * (u * u * ia + v * v * ib)).exp();
            let px = &mut row[x * 3..x * 3 + 3];
            for (p, peak) in px.iter_mut().zip(spec.peak_intensity) {
                *p += (peak * w) as f32;
            }
        }
    }
}

/// Background plus accumulated light, rounded and clamped to 8 bits.
pub fn quantize(plate: &Plate, canvas: &Canvas) -> RgbImage {
    debug_assert_eq!((plate.width, plate.height), (canvas.width, canvas.height));
    let mut out = RgbImage::new(canvas.width as u32, canvas.height as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        for c in 0..3 {
            let v = plate.data[i * 3 + c] + 255.0 * canvas.data[i * 3 + c];
            px.0[c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Renders one complete scene. Centroids are re-drawn until each owns a
/// distinct pixel, so a rasterized point annotation reproduces the count.
pub fn compose_scene(cfg: &SceneConfig) -> Result<AnnotatedImage> {
    cfg.validate()?;
    let mut rng = crate::seed::rng(cfg.seed);
    let plate = cfg.background.plate(cfg.width, cfg.height, &mut rng)?;
    let mut canvas = Canvas::new(cfg.width, cfg.height);
    let mut taken = vec![false; cfg.width * cfg.height];
    let mut centroids = Vec::with_capacity(cfg.target_count);
    for _ in 0..cfg.target_count {
        let mut spec = sample_bacterium(&mut rng, cfg)?;
        loop {
            let owner = owning_pixel(spec.center);
            let slot = owner[1] * cfg.width + owner[0];
            if !taken[slot] {
                taken[slot] = true;
                break;
            }
            spec.center = sample_center(&mut rng, cfg);
        }
        render_bacterium(&mut canvas, &spec);
        centroids.push(spec.center);
    }
    Ok(AnnotatedImage { pixels: quantize(&plate, &canvas), count: centroids.len(), centroids })
}

fn sample_center(rng: &mut ChaCha8Rng, scene: &SceneConfig) -> [f64; 2] {
    [Range::new(0.0, (scene.width - 1) as f64).sample(rng), Range::new(0.0, (scene.height - 1) as f64).sample(rng)]
}

/// Pixel `[x, y]` containing a sub-pixel centroid.
pub fn owning_pixel(center: [f64; 2]) -> [usize; 2] {
    [center[0].round() as usize, center[1].round() as usize]
}
