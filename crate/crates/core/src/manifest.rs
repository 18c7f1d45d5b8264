//! JSON-lines dataset manifests.
//!
//! Every dataset, generated or adapted, is described by one `manifest.jsonl`
//! whose lines bind an image path (relative to the manifest's directory) to
//! an integer count and, when known, the instance centroids.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{input, io_err, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub image: String,
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<String>,
}

impl Record {
    pub fn new(image: impl Into<String>, count: u64) -> Self {
        Self { image: image.into(), count, centroids: None, seed: None, source: None, lineage: None }
    }

    pub fn with_centroids(image: impl Into<String>, centroids: Vec<[f64; 2]>) -> Self {
        let mut r = Self::new(image, centroids.len() as u64);
        r.centroids = Some(centroids);
        r
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.centroids {
            if c.len() as u64 != self.count {
                return Err(input(format!("{}: count {} but {} centroids", self.image, self.count, c.len())));
            }
        }
        Ok(())
    }
}

/// Summary of the count labels in a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountStats {
    pub images: usize,
    pub total: u64,
    pub min: u64,
    pub mean: f64,
    pub max: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    /// Directory image paths are resolved against.
    pub root: PathBuf,
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<Record>) -> Self {
        Self { root: root.into(), records }
    }

    /// Reads `path`, or `path/manifest.jsonl` when `path` is a directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(MANIFEST_FILE);
        }
        let file = File::open(&path).map_err(io_err(&path))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|source| Error::Json { context: format!("{}:{}", path.display(), i + 1), source })?;
            record.validate()?;
            records.push(record);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, records })
    }

    /// Writes `root/manifest.jsonl` and returns its path.
    pub fn save(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let path = self.root.join(MANIFEST_FILE);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|source| Error::Json { context: r.image.clone(), source })?;
            writeln!(w, "{line}").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn image_path(&self, record: &Record) -> PathBuf {
        self.root.join(&record.image)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_stats(&self) -> Option<CountStats> {
        let first = self.records.first()?;
        let mut stats =
            CountStats { images: self.records.len(), total: 0, min: first.count, mean: 0.0, max: first.count };
        for r in &self.records {
            stats.total += r.count;
            stats.min = stats.min.min(r.count);
            stats.max = stats.max.max(r.count);
        }
        stats.mean = stats.total as f64 / stats.images as f64;
        Some(stats)
    }

    /// Deterministic shuffled split into `(first, second)` with
    /// `round(fraction · n)` records in the first part.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(input(format!("split fraction {fraction} outside [0, 1]")));
        }
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.shuffle(&mut crate::seed::rng(crate::seed::stream_seed(seed, "split")));
        let cut = (fraction * self.records.len() as f64).round() as usize;
        let pick = |idx: &[usize]| {
            let mut idx = idx.to_vec();
            idx.sort_unstable();
            Manifest::new(&self.root, idx.iter().map(|&i| self.records[i].clone()).collect())
        };
        Ok((pick(&order[..cut]), pick(&order[cut..])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optional_fields_are_omitted() {
        let mut r = Record::with_centroids("images/a.png", vec![[1.5, 2.0]]);
        r.seed = Some(9);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"image":"images/a.png","count":1,"centroids":[[1.5,2.0]],"seed":9}"#);
    }

    #[test]
    fn count_must_match_centroids() {
        let mut r = Record::with_centroids("a.png", vec![[0.0, 0.0]]);
        r.count = 2;
        assert!(r.validate().is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let m = Manifest::new("x", (0..10).map(|i| Record::new(format!("{i}.png"), i)).collect());
        let (a, b) = m.split(0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<u64> = a.records.iter().chain(&b.records).map(|r| r.count).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(m.split(0.8, 3).unwrap(), (a, b));
    }
}
