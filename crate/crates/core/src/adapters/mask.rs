//! Instance counting on binary masks: connected components split by a
//! marker-based watershed on the distance transform.

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskImage {
    pub width: usize,
    pub height: usize,
    data: Vec<bool>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    /// Builds a mask from 0/1 values; anything else is rejected.
    pub fn from_values(width: usize, height: usize, values: &[u8]) -> Result<Self> {
        if values.len() != width * height {
            return Err(input(format!("{} values for a {width}x{height} mask", values.len())));
        }
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(input(format!("mask value {v} is not binary")));
        }
        Ok(Self { width, height, data: values.iter().map(|&v| v == 1).collect() })
    }

    /// Foreground wherever any colour channel is nonzero.
    pub fn from_image(img: &DynamicImage) -> Self {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self { width: w as usize, height: h as usize, data: rgb.pixels().map(|p| p.0.iter().any(|&c| c > 0)).collect() }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

fn neighbours(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    NEIGHBOURS.iter().filter_map(move |&(dx, dy)| {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then_some((nx as usize, ny as usize))
    })
}

/// 8-connected component labels (0 = background, 1.. = components) and
/// the number of components.
pub fn connected_components(mask: &MaskImage) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for (nx, ny) in neighbours(i % w, i / w, w, h) {
                let j = ny * w + nx;
                if mask.data[j] && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }
    (labels, next as usize)
}

/// Stand-in for "no background seen yet"; larger than any squared distance.
const FAR: f64 = 1e18;

/// Exact 1-D squared distance transform of a sampled function (lower
/// envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let parabola = |p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
        let mut s = parabola(v[k]);
        // z[0] is -inf, so this stops at k = 0 at the latest.
        while s <= z[k] {
            k -= 1;
            s = parabola(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Euclidean distance from every pixel to the nearest background pixel,
/// treating everything outside the image as background.
pub fn distance_transform(mask: &MaskImage) -> Vec<f64> {
    let (w, h) = (mask.width + 2, mask.height + 2);
    let mut grid = vec![0.0f64; w * h];
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                grid[(y + 1) * w + x + 1] = FAR;
            }
        }
    }
    let n = w.max(h);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    let mut dist = vec![0.0; mask.width * mask.height];
    for y in 0..mask.height {
        for x in 0..mask.width {
            dist[y * mask.width + x] = grid[(y + 1) * w + x + 1].sqrt();
        }
    }
    dist
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WatershedConfig {
    /// Minimum Chebyshev distance in pixels between two markers.
    pub min_separation: usize,
    /// Minimum height of a distance peak above the saddle joining it to a
    /// higher peak, in pixels.
    pub min_depth: f64,
}

impl Default for WatershedConfig {
    fn default() -> Self {
        Self { min_separation: 5, min_depth: 1.0 }
    }
}

/// Watershed markers, as `[x, y]` pixel coordinates.
///
/// The negated distance map is flooded in order of decreasing distance.
/// Every regional maximum starts a basin; when two basins meet, the one
/// with the lower peak survives as a separate marker only if it is deep
/// enough and far enough from the other peak, otherwise it is absorbed.
pub fn watershed_markers(mask: &MaskImage, cfg: &WatershedConfig) -> Vec<[usize; 2]> {
    let (w, h) = (mask.width, mask.height);
    let dist = distance_transform(mask);
    let mut order: Vec<usize> = (0..w * h).filter(|&i| mask.data[i]).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));

    const UNSEEN: usize = usize::MAX;
    let mut parent = vec![UNSEEN; w * h];
    // Peak pixel of each basin, stored at its root.
    let mut peak = vec![0usize; w * h];
    let mut markers = Vec::new();

    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    for &i in &order {
        parent[i] = i;
        peak[i] = i;
        let level = dist[i];
        for (nx, ny) in neighbours(i % w, i / w, w, h) {
            let j = ny * w + nx;
            if parent[j] == UNSEEN {
                continue;
            }
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a == b {
                continue;
            }
            let (pa, pb) = (peak[a], peak[b]);
            // Higher peak wins; ties go to the pixel visited first.
            let a_elder = dist[pa] > dist[pb] || (dist[pa] == dist[pb] && pa < pb);
            let (elder, younger) = if a_elder { (a, b) } else { (b, a) };
            let (pe, py) = (peak[elder], peak[younger]);
            let separation = (pe % w).abs_diff(py % w).max((pe / w).abs_diff(py / w));
            if dist[py] - level >= cfg.min_depth && separation >= cfg.min_separation {
                markers.push([py % w, py / w]);
            }
            parent[younger] = elder;
        }
    }
    for &i in &order {
        if find(&mut parent, i) == i {
            markers.push([peak[i] % w, peak[i] / w]);
        }
    }
    markers.sort_by_key(|m| (m[1], m[0]));
    markers
}

/// Number of instances in a binary mask.
pub fn count_from_mask(mask: &MaskImage) -> usize {
    count_from_mask_with(mask, &WatershedConfig::default())
}

pub fn count_from_mask_with(mask: &MaskImage, cfg: &WatershedConfig) -> usize {
    watershed_markers(mask, cfg).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(mask: &mut MaskImage, x0: usize, y0: usize, w: usize, h: usize) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                mask.set(x, y, true);
            }
        }
    }

    #[test]
    fn empty_mask_has_no_instances() {
        assert_eq!(count_from_mask(&MaskImage::new(10, 10)), 0);
    }

    #[test]
    fn two_disjoint_blocks() {
        let mut m = MaskImage::new(10, 10);
        block(&mut m, 0, 0, 3, 3);
        block(&mut m, 6, 6, 3, 3);
        assert_eq!(connected_components(&m).1, 2);
        assert_eq!(count_from_mask(&m), 2);
    }

    #[test]
    fn diagonal_touch_is_one_component() {
        let mut m = MaskImage::new(4, 4);
        m.set(0, 0, true);
        m.set(1, 1, true);
        assert_eq!(connected_components(&m).1, 1);
    }

    #[test]
    fn long_bar_is_not_oversegmented() {
        let mut m = MaskImage::new(60, 10);
        block(&mut m, 2, 3, 55, 4);
        assert_eq!(count_from_mask(&m), 1);
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mut m = MaskImage::new(13, 9);
        block(&mut m, 1, 1, 8, 6);
        block(&mut m, 9, 4, 4, 5);
        m.set(4, 3, false);
        let d = distance_transform(&m);
        for y in 0..9 {
            for x in 0..13 {
                let mut best = f64::INFINITY;
                for by in -1..=9isize {
                    for bx in -1..=13isize {
                        let inside = bx >= 0 && by >= 0 && bx < 13 && by < 9;
                        if inside && m.get(bx as usize, by as usize) {
                            continue;
                        }
                        let dd = ((bx - x as isize).pow(2) + (by - y as isize).pow(2)) as f64;
                        best = best.min(dd.sqrt());
                    }
                }
                let expect = if m.get(x, y) { best } else { 0.0 };
                assert!((d[y * 13 + x] - expect).abs() < 1e-12, "({x},{y})");
            }
        }
    }

    #[test]
    fn rejects_non_binary_values() {
        assert!(MaskImage::from_values(2, 1, &[0, 2]).is_err());
        assert_eq!(MaskImage::from_values(2, 1, &[0, 1]).unwrap().foreground(), 1);
    }
}
