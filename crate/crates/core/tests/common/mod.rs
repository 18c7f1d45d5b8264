#![allow(dead_code)]

use microcount::adapters::MaskImage;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn paint_disc(mask: &mut MaskImage, cx: f64, cy: f64, r: f64) {
    for y in 0..mask.height {
        for x in 0..mask.width {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                mask.set(x, y, true);
            }
        }
    }
}

/// Discs and rectangles with at least one background pixel of clearance
/// between any two, so 8-connected components are exactly the blobs.
pub fn disjoint_blob_mask(rng: &mut ChaCha8Rng, size: usize) -> (MaskImage, usize) {
    let mut mask = MaskImage::new(size, size);
    let mut occupied: Vec<(f64, f64, f64, f64)> = Vec::new();
    let target = rng.random_range(0..12);
    for _ in 0..target * 20 {
        if occupied.len() == target {
            break;
        }
        let disc = rng.random_bool(0.5);
        let (hw, hh) = if disc {
            let r = rng.random_range(2.0..9.0);
            (r, r)
        } else {
            (rng.random_range(1.0..12.0), rng.random_range(1.0..8.0))
        };
        let cx = rng.random_range(hw + 1.0..size as f64 - hw - 1.0);
        let cy = rng.random_range(hh + 1.0..size as f64 - hh - 1.0);
        let bbox = (cx - hw - 2.0, cy - hh - 2.0, cx + hw + 2.0, cy + hh + 2.0);
        if occupied.iter().any(|o| bbox.0 < o.2 && o.0 < bbox.2 && bbox.1 < o.3 && o.1 < bbox.3) {
            continue;
        }
        occupied.push(bbox);
        if disc {
            paint_disc(&mut mask, cx, cy, hw);
        } else {
            for y in (cy - hh).ceil() as usize..=(cy + hh).floor() as usize {
                for x in (cx - hw).ceil() as usize..=(cx + hw).floor() as usize {
                    mask.set(x, y, true);
                }
            }
        }
    }
    (mask, occupied.len())
}

/// Two discs whose union has a clear neck, so its distance map has two peaks.
pub fn overlapping_discs(rng: &mut ChaCha8Rng) -> MaskImage {
    let r = rng.random_range(8.0..14.0);
    let d = r * rng.random_range(1.2..1.7);
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let size = 80;
    let (cx, cy) = (40.0 + rng.random_range(-2.0..2.0), 40.0 + rng.random_range(-2.0..2.0));
    let (dx, dy) = (0.5 * d * angle.cos(), 0.5 * d * angle.sin());
    let mut mask = MaskImage::new(size, size);
    paint_disc(&mut mask, cx - dx, cy - dy, r);
    paint_disc(&mut mask, cx + dx, cy + dy, r);
    mask
}

/// Reference instance count for disjoint blobs: breadth-first 8-neighbour
/// flood fill, written independently of the library's labelling.
pub fn flood_fill_count(mask: &MaskImage) -> usize {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for sy in 0..h {
        for sx in 0..w {
            if !mask.get(sx, sy) || seen[sy * w + sx] {
                continue;
            }
            count += 1;
            let mut queue = std::collections::VecDeque::from([(sx, sy)]);
            seen[sy * w + sx] = true;
            while let Some((x, y)) = queue.pop_front() {
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if mask.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
        }
    }
    count
}
