use image::{imageops, RgbImage};

use super::Sample;
use crate::error::{config, Result};
use crate::manifest::Record;

/// Half-open `[start, end)` bounds of `parts` equal slices of `len`; the
/// last slice absorbs the remainder.
pub fn grid_bounds(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let step = len / parts;
    (0..parts).map(|i| (i * step, if i + 1 == parts { len } else { (i + 1) * step })).collect()
}

fn slot(bounds: &[(usize, usize)], v: f64) -> Option<usize> {
    bounds.iter().position(|&(a, b)| v >= a as f64 && v < b as f64)
}

/// Splits a centroid-annotated sample into a `rows × cols` grid of patches,
/// row-major. Each centroid lands in exactly one patch, in patch-local
/// coordinates.
pub fn patch_image(sample: &Sample, rows: usize, cols: usize) -> Result<Vec<Sample>> {
    let (w, h) = sample.image.dimensions();
    let (w, h) = (w as usize, h as usize);
    if rows == 0 || cols == 0 || rows > h || cols > w {
        return Err(config(format!("{rows}x{cols} grid does not fit a {w}x{h} image")));
    }
    let centroids = sample
        .record
        .centroids
        .as_ref()
        .ok_or_else(|| config(format!("{}: patching needs centroid annotations", sample.record.image)))?;
    let xs = grid_bounds(w, cols);
    let ys = grid_bounds(h, rows);
    let mut buckets = vec![Vec::new(); rows * cols];
    for c in centroids {
        // Centroids at the far edge (x == W) still belong to the last slice.
        let cx = slot(&xs, c[0]).unwrap_or(cols - 1);
        let cy = slot(&ys, c[1]).unwrap_or(rows - 1);
        buckets[cy * cols + cx].push([c[0] - xs[cx].0 as f64, c[1] - ys[cy].0 as f64]);
    }
    let stem = sample.record.image.trim_end_matches(".png");
    let mut out = Vec::with_capacity(rows * cols);
    for (r, &(y0, y1)) in ys.iter().enumerate() {
        for (c, &(x0, x1)) in xs.iter().enumerate() {
            let image: RgbImage =
                imageops::crop_imm(&sample.image, x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32).to_image();
            let mut record =
                Record::with_centroids(format!("{stem}_r{r}c{c}.png"), std::mem::take(&mut buckets[r * cols + c]));
            record.source = sample.record.source.clone();
            record.lineage = Some(join_lineage(&sample.record, &format!("patch_r{r}c{c}")));
            out.push(Sample { record, image });
        }
    }
    Ok(out)
}

pub(crate) fn join_lineage(record: &Record, step: &str) -> String {
    match &record.lineage {
        Some(prev) => format!("{prev}/{step}"),
        None => step.to_string(),
    }
}
