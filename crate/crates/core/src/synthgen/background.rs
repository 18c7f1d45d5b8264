use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, io_err, Error, Result};

const BASE_LEVEL: (f64, f64) = (5.0, 20.0);
const MAX_NOISE_AMPLITUDE: f64 = 10.0;
/// Coarse noise lattice cells along the longer image side.
const NOISE_CELLS: usize = 4;

/// Where background plates come from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundSource {
    /// Dark base level plus smooth illumination noise.
    #[default]
    Synthetic,
    /// Images picked at random from a directory and resized to the scene.
    Directory(PathBuf),
}

/// Background intensities in 8-bit units, `H × W × 3`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plate {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl BackgroundSource {
    pub fn plate(&self, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Result<Plate> {
        match self {
            BackgroundSource::Synthetic => Ok(synthetic_plate(width, height, rng)),
            BackgroundSource::Directory(dir) => directory_plate(dir, width, height, rng),
        }
    }
}

fn synthetic_plate(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Plate {
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(BASE_LEVEL.0..BASE_LEVEL.1));
    let amplitude = rng.random_range(0.0..MAX_NOISE_AMPLITUDE);
    let cell = (width.max(height) as f64 / NOISE_CELLS as f64).max(1.0);
    let gw = (width as f64 / cell).ceil() as usize + 1;
    let gh = (height as f64 / cell).ceil() as usize + 1;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
    let mut data = vec![0.0f32; width * height * 3];
    for y in 0..height {
        let fy = y as f64 / cell;
        let y0 = (fy as usize).min(gh - 2);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = x as f64 / cell;
            let x0 = (fx as usize).min(gw - 2);
            let tx = fx - x0 as f64;
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
            let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
            let noise = amplitude * (top * (1.0 - ty) + bottom * ty);
            let px = &mut data[(y * width + x) * 3..(y * width + x) * 3 + 3];
            for c in 0..3 {
                px[c] = (base[c] + noise) as f32;
            }
        }
    }
    Plate { width, height, data }
}

/// Sorted image files in `dir`.
pub(crate) fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "tif" | "tiff" | "bmp"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn directory_plate(dir: &Path, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Result<Plate> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(input(format!("no background images in {}", dir.display())));
    }
    let path = &files[rng.random_range(0..files.len())];
    let img = image::open(path).map_err(|source| Error::Image { path: path.clone(), source })?.to_rgb8();
    let img = if img.dimensions() == (width as u32, height as u32) {
        img
    } else {
        image::imageops::resize(&img, width as u32, height as u32, FilterType::Triangle)
    };
    Ok(Plate { width, height, data: img.into_raw().into_iter().map(f32::from).collect() })
}
