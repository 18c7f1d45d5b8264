//! Readers for the native layouts of the supported datasets.
//!
//! * `vgg`: one directory of `NNNcell.png` images with `NNNdots.png` point
//!   annotations beside them.
//! * `fnc`: `images/` and `masks/` subdirectories with matching file stems.
//! * `cancer`: images plus a `counts.csv` with `image,count` columns.
//! * `synthetic`: a manifest written by the generator.

use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use super::mask::{watershed_markers, MaskImage, WatershedConfig};
use super::points::{count_from_points, rasterize_points};
use super::{augment, patch_image, Sample};
use crate::error::{config, input, io_err, Error, Result};
use crate::manifest::{Manifest, Record};
use crate::synthgen::list_images;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Vgg,
    Fnc,
    Cancer,
    Synthetic,
}

impl Layout {
    pub fn tag(self) -> &'static str {
        match self {
            Layout::Vgg => "vgg-cells",
            Layout::Fnc => "fluorescent-neuronal-cells",
            Layout::Cancer => "cancer-cells",
            Layout::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg" => Ok(Layout::Vgg),
            "fnc" => Ok(Layout::Fnc),
            "cancer" => Ok(Layout::Cancer),
            "synthetic" => Ok(Layout::Synthetic),
            _ => Err(config(format!("unknown layout {s:?} (expected vgg, fnc, cancer or synthetic)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    pub layout: Layout,
    pub input: PathBuf,
    pub output: PathBuf,
    /// `[rows, cols]`; omitted means no patching.
    #[serde(default)]
    pub patch_grid: Option<[usize; 2]>,
    #[serde(default)]
    pub augment: bool,
    #[serde(default)]
    pub watershed: WatershedConfig,
}

/// Ground truth of one source image before conversion.
#[derive(Clone, Debug)]
enum Truth {
    Points(PathBuf),
    Mask(PathBuf),
    Count(u64),
    Centroids(Vec<[f64; 2]>),
}

#[derive(Clone, Debug)]
struct SourceItem {
    image: PathBuf,
    stem: String,
    truth: Truth,
}

fn stem_of(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn discover(cfg: &AdaptConfig) -> Result<Vec<SourceItem>> {
    let dir = &cfg.input;
    let items = match cfg.layout {
        Layout::Vgg => list_images(dir)?
            .into_iter()
            .filter_map(|p| {
                let stem = stem_of(&p);
                let id = stem.strip_suffix("cell")?.to_string();
                let dots = p.with_file_name(format!("{id}dots.png"));
                Some(SourceItem { image: p, stem, truth: Truth::Points(dots) })
            })
            .collect(),
        Layout::Fnc => {
            let masks = list_images(&dir.join("masks"))?;
            list_images(&dir.join("images"))?
                .into_iter()
                .map(|p| {
                    let stem = stem_of(&p);
                    let mask = masks
                        .iter()
                        .find(|m| stem_of(m) == stem)
                        .cloned()
                        .ok_or_else(|| input(format!("no mask for {}", p.display())))?;
                    Ok(SourceItem { image: p, stem, truth: Truth::Mask(mask) })
                })
                .collect::<Result<_>>()?
        }
        Layout::Cancer => {
            let csv_path = dir.join("counts.csv");
            let mut reader = csv::Reader::from_path(&csv_path)?;
            let mut items = Vec::new();
            for row in reader.deserialize() {
                let (image, count): (String, u64) = row?;
                let path = dir.join(&image);
                items.push(SourceItem { stem: stem_of(&path), image: path, truth: Truth::Count(count) });
            }
            items
        }
        Layout::Synthetic => {
            let m = Manifest::load(dir)?;
            m.records
                .iter()
                .map(|r| {
                    let centroids = r
                        .centroids
                        .clone()
                        .ok_or_else(|| input(format!("{}: synthetic record without centroids", r.image)))?;
                    let image = m.image_path(r);
                    Ok(SourceItem { stem: stem_of(&image), image, truth: Truth::Centroids(centroids) })
                })
                .collect::<Result<_>>()?
        }
    };
    if items.is_empty() {
        return Err(input(format!("no {} images found under {}", cfg.layout.tag(), dir.display())));
    }
    Ok(items)
}

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

fn base_sample(item: &SourceItem, cfg: &AdaptConfig) -> Result<Sample> {
    let image = open(&item.image)?.to_rgb8();
    let name = format!("images/{}.png", item.stem);
    let mut record = match &item.truth {
        Truth::Points(p) => Record::with_centroids(name, count_from_points(&open(p)?).points),
        Truth::Mask(p) => {
            let mask = MaskImage::from_image(&open(p)?);
            let markers = watershed_markers(&mask, &cfg.watershed);
            Record::with_centroids(name, markers.iter().map(|m| [m[0] as f64, m[1] as f64]).collect())
        }
        Truth::Count(n) => Record::new(name, *n),
        Truth::Centroids(c) => {
            // Re-derive the label from a rasterized point annotation.
            let ann = rasterize_points(image.width(), image.height(), c)?;
            let found = count_from_points(&DynamicImage::ImageLuma8(ann));
            let mut r = Record::with_centroids(name, c.clone());
            r.count = found.count as u64;
            r
        }
    };
    record.source = Some(cfg.layout.tag().to_string());
    record.validate()?;
    Ok(Sample { record, image })
}

fn expand(item: &SourceItem, cfg: &AdaptConfig) -> Result<Vec<Sample>> {
    let base = base_sample(item, cfg)?;
    let patches = match cfg.patch_grid {
        Some([rows, cols]) => {
            if cfg.layout == Layout::Cancer {
                return Err(config("cancer-cells records carry only global counts and cannot be patched"));
            }
            patch_image(&base, rows, cols)?
        }
        None => vec![base],
    };
    Ok(if cfg.augment { patches.iter().flat_map(augment).collect() } else { patches })
}

/// Converts a dataset into count-labelled PNGs plus `manifest.jsonl` under
/// `cfg.output`.
pub fn adapt_dataset(cfg: &AdaptConfig) -> Result<Manifest> {
    let items = discover(cfg)?;
    let images = cfg.output.join("images");
    std::fs::create_dir_all(&images).map_err(io_err(&images))?;
    let results = microcount_tensor::par::map_slice(&items, |item| -> Result<Vec<Record>> {
        expand(item, cfg)?
            .into_iter()
            .map(|s| {
                let path = cfg.output.join(&s.record.image);
                s.image.save(&path).map_err(|source| Error::Image { path, source })?;
                Ok(s.record)
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(mut recs) => records.append(&mut recs),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let manifest = Manifest::new(&cfg.output, records);
    manifest.save()?;
    match first_error {
        None => Ok(manifest),
        Some(e) => Err(Error::Partial { written: manifest.len(), requested: items.len(), source: Box::new(e) }),
    }
}
