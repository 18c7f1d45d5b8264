//! Decoded, normalized image tensors held in memory for training and evaluation.

use microcount_tensor::{par, Tensor};
use serde::{Deserialize, Serialize};

use crate::adapters::{preprocess_to, NormalizationStats};
use crate::error::{input, Error, Result};
use crate::manifest::Manifest;

#[derive(Clone, Debug)]
pub struct TensorDataset {
    pub size: usize,
    /// `[n, 3, size, size]` row-major.
    pub images: Vec<f32>,
    pub counts: Vec<f64>,
    pub names: Vec<String>,
}

/// A record that could not be decoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub image: String,
    pub reason: String,
}

impl TensorDataset {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    fn image_len(&self) -> usize {
        3 * self.size * self.size
    }

    /// Loads every record; any unreadable image is an error.
    pub fn load(manifest: &Manifest, stats: &NormalizationStats, size: usize) -> Result<Self> {
        let (data, skipped) = Self::load_lenient(manifest, stats, size)?;
        match skipped.first() {
            Some(s) => Err(input(format!("{}: {}", s.image, s.reason))),
            None => Ok(data),
        }
    }

    /// Loads what can be decoded and lists the rest.
    pub fn load_lenient(manifest: &Manifest, stats: &NormalizationStats, size: usize) -> Result<(Self, Vec<Skipped>)> {
        stats.validate()?;
        let decoded = par::map_slice(&manifest.records, |r| -> Result<Tensor> {
            let path = manifest.image_path(r);
            let img = image::open(&path).map_err(|source| Error::Image { path, source })?;
            preprocess_to(&img.to_rgb8(), stats, size)
        });
        let mut data = Self { size, images: Vec::new(), counts: Vec::new(), names: Vec::new() };
        let mut skipped = Vec::new();
        for (r, t) in manifest.records.iter().zip(decoded) {
            match t {
                Ok(t) => {
                    data.images.extend_from_slice(t.data());
                    data.counts.push(r.count as f64);
                    data.names.push(r.image.clone());
                }
                Err(e) => skipped.push(Skipped { image: r.image.clone(), reason: e.to_string() }),
            }
        }
        Ok((data, skipped))
    }

    /// Builds a dataset from already normalized `[3, size, size]` tensors.
    pub fn from_tensors(size: usize, items: Vec<(Tensor, f64)>) -> Result<Self> {
        let mut data = Self { size, images: Vec::new(), counts: Vec::new(), names: Vec::new() };
        for (i, (t, c)) in items.into_iter().enumerate() {
            if t.shape() != [3, size, size] {
                return Err(input(format!("item {i} has shape {:?}", t.shape())));
            }
            data.images.extend_from_slice(t.data());
            data.counts.push(c);
            data.names.push(format!("item{i}"));
        }
        Ok(data)
    }

    /// Stacks the listed items into `[b, 3, S, S]` images and `[b]` counts.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let n = self.image_len();
        let mut images = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            images.extend_from_slice(&self.images[i * n..(i + 1) * n]);
        }
        let counts = indices.iter().map(|&i| self.counts[i] as f32).collect();
        Ok((
            Tensor::from_vec([indices.len(), 3, self.size, self.size], images)?,
            Tensor::from_vec([indices.len()], counts)?,
        ))
    }

    pub fn mean_count(&self) -> f64 {
        self.counts.iter().sum::<f64>() / self.counts.len().max(1) as f64
    }
}
