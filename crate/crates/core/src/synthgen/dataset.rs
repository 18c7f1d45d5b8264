use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{compose_scene, SceneConfig};
use crate::error::{config, io_err, Error, Result};
use crate::manifest::{Manifest, Record};
use crate::seed::{derive_seed, rng, stream_seed};

/// Largest count in the reference dataset.
pub const MAX_REFERENCE_COUNT: u64 = 1855;

pub const IMAGE_DIR: &str = "images";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CountDistribution {
    /// Uniform integer on `[min, max]`.
    Uniform {
        min: u64,
        max: u64,
    },
    Fixed(u64),
}

impl Default for CountDistribution {
    fn default() -> Self {
        CountDistribution::Uniform { min: 0, max: MAX_REFERENCE_COUNT }
    }
}

impl CountDistribution {
    pub fn max(&self) -> u64 {
        match *self {
            CountDistribution::Uniform { max, .. } => max,
            CountDistribution::Fixed(n) => n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CountDistribution::Uniform { min, max } if min > max => {
                Err(config(format!("count range [{min}, {max}] is not ordered")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        match *self {
            CountDistribution::Uniform { min, max } => rng.random_range(min..=max),
            CountDistribution::Fixed(n) => n,
        }
    }
}

/// A batch of scenes sharing one template. The template's `seed` is the
/// master seed and its `target_count` is ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_images: usize,
    pub scene: SceneConfig,
    #[serde(default)]
    pub counts: CountDistribution,
}

impl DatasetSpec {
    /// Scene configuration for image `index`, independent of every other image.
    pub fn scene_for(&self, index: usize) -> SceneConfig {
        let seed = derive_seed(self.scene.seed, index as u64);
        let count = self.counts.sample(&mut rng(stream_seed(seed, "count")));
        SceneConfig { target_count: count as usize, seed, ..self.scene.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.counts.validate()?;
        let pixels = (self.scene.width * self.scene.height) as u64;
        if self.counts.max() > pixels {
            return Err(config(format!(
                "counts up to {} do not fit a {}x{} scene",
                self.counts.max(),
                self.scene.width,
                self.scene.height
            )));
        }
        SceneConfig { target_count: 0, ..self.scene.clone() }.validate()
    }
}

pub fn image_name(index: usize) -> String {
    format!("{IMAGE_DIR}/syn_{index:06}.png")
}

/// Renders `spec.n_images` scenes into `out_dir` and writes the manifest.
///
/// Images are produced in parallel; each depends only on its own index. If
/// any image fails, the manifest still lists every image that was written
/// and the error reports how far generation got.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let images = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&images).map_err(io_err(&images))?;
    let results = microcount_tensor::par::map_range(spec.n_images, |i| -> Result<Record> {
        let scene = spec.scene_for(i);
        let img = compose_scene(&scene)?;
        let name = image_name(i);
        let path = out_dir.join(&name);
        img.pixels.save(&path).map_err(|source| Error::Image { path, source })?;
        let mut record = Record::with_centroids(name, img.centroids);
        record.seed = Some(scene.seed);
        record.source = Some("synthetic".into());
        Ok(record)
    });
    let mut records = Vec::with_capacity(results.len());
    let mut first_error = None;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let manifest = Manifest::new(out_dir, records);
    manifest.save()?;
    match first_error {
        None => Ok(manifest),
        Some(e) => Err(Error::Partial { written: manifest.len(), requested: spec.n_images, source: Box::new(e) }),
    }
}
