//! Closed-form operation counts for one image, mirroring the forward
//! passes op for op. Tests compare these against the counts the graph
//! records while tracing.

use microcount_tensor::FlopCount;

use super::cnn::{cnn_channels, EXPANSION};
use super::config::{BackboneConfig, Family, HeadType};
use super::vit::PARALLEL_BRANCHES;
use crate::error::Result;

#[derive(Default)]
struct Tally(FlopCount);

impl Tally {
    fn elem(&mut self, n: usize) {
        self.0.elementwise += n as u64;
    }

    fn macs(&mut self, n: usize) {
        self.0.macs += n as u64;
    }

    fn linear(&mut self, rows: usize, input: usize, output: usize, bias: bool) {
        self.macs(rows * input * output);
        if bias {
            self.elem(rows * output);
        }
    }

    fn conv(&mut self, out_c: usize, in_per_group: usize, k: usize, out_pixels: usize, bias: bool) {
        self.macs(out_c * in_per_group * k * k * out_pixels);
        if bias {
            self.elem(out_c * out_pixels);
        }
    }

    fn feed_forward(&mut self, n: usize, dim: usize, mlp: usize) {
        self.elem(n * dim);
        self.linear(n, dim, mlp, true);
        self.elem(n * mlp);
        self.linear(n, mlp, dim, true);
    }

    fn patch_embed(&mut self, input: usize, patch: usize, dim: usize) -> usize {
        let n = (input / patch).pow(2);
        self.linear(n, patch * patch * 3, dim, true);
        self.elem(n * dim);
        n
    }

    fn attention(&mut self, n: usize, dim: usize, heads: usize, dh: usize, reattn: bool) {
        let inner = heads * dh;
        self.elem(n * dim);
        self.linear(n, dim, 3 * inner, false);
        self.macs(heads * n * n * dh);
        self.elem(2 * heads * n * n);
        if reattn {
            self.elem(4 * heads * heads + heads);
            self.macs(n * n * heads * heads);
        }
        self.macs(heads * n * n * dh);
        self.linear(n, inner, dim, true);
    }

    /// Single query attending over itself plus `context` tokens.
    fn token_attention(&mut self, context: usize, dim: usize, heads: usize, dh: usize) {
        let inner = heads * dh;
        let n = context + 1;
        self.elem(dim);
        self.linear(1, dim, inner, false);
        self.linear(n, dim, 2 * inner, false);
        self.macs(heads * n * dh);
        self.elem(2 * heads * n);
        self.macs(heads * n * dh);
        self.linear(1, inner, dim, true);
    }

    fn serial_block(&mut self, n: usize, dim: usize, heads: usize, dh: usize, mlp: usize, reattn: bool) {
        self.attention(n, dim, heads, dh, reattn);
        self.elem(n * dim);
        self.feed_forward(n, dim, mlp);
        self.elem(n * dim);
    }

    fn regressor(&mut self, dim: usize, hidden: Option<usize>) {
        match hidden {
            Some(h) => {
                self.linear(1, dim, h, true);
                self.elem(h);
                self.linear(1, h, 1, true);
            }
            None => self.linear(1, dim, 1, true),
        }
    }
}

fn vit(t: &mut Tally, c: &BackboneConfig) -> Result<()> {
    let dim = c.dim.single("dim")?;
    let mlp = c.mlp_dim.single("mlp_dim")?;
    let n = t.patch_embed(c.input_size, c.patch_size.single("patch_size")?, dim) + 1;
    for _ in 0..c.depth {
        if c.family == Family::Parallelvit {
            for _ in 0..PARALLEL_BRANCHES {
                t.attention(n, dim, c.heads, c.dim_head, false);
            }
            t.elem(PARALLEL_BRANCHES * n * dim);
            for _ in 0..PARALLEL_BRANCHES {
                t.feed_forward(n, dim, mlp);
            }
            t.elem(PARALLEL_BRANCHES * n * dim);
        } else {
            t.serial_block(n, dim, c.heads, c.dim_head, mlp, c.family == Family::Deepvit);
        }
    }
    t.elem(n * dim);
    if c.head_type == HeadType::Gap {
        t.elem(n * dim);
    }
    t.regressor(dim, c.head_hidden);
    Ok(())
}

fn xcit(t: &mut Tally, c: &BackboneConfig) -> Result<()> {
    let dim = c.dim.single("dim")?;
    let mlp = c.mlp_dim.single("mlp_dim")?;
    let (h, dh) = (c.heads, c.dim_head);
    let inner = h * dh;
    let n = t.patch_embed(c.input_size, c.patch_size.single("patch_size")?, dim);
    for _ in 0..c.depth {
        // Cross-covariance attention.
        t.elem(n * dim);
        t.linear(n, dim, 3 * inner, false);
        t.elem(2 * h * dh * n);
        t.macs(h * dh * dh * n);
        t.elem(2 * h * dh * dh);
        t.macs(h * dh * dh * n);
        t.linear(n, inner, dim, true);
        t.elem(n * dim);
        // Local patch interaction.
        t.elem(n * dim);
        t.conv(dim, 1, 3, n, true);
        t.elem(2 * dim * n);
        t.conv(dim, 1, 3, n, true);
        t.elem(n * dim);
        t.feed_forward(n, dim, mlp);
        t.elem(n * dim);
    }
    t.elem(n * dim);
    if c.head_type == HeadType::Token {
        t.token_attention(n, dim, h, dh);
        t.elem(dim);
        t.feed_forward(1, dim, mlp);
        t.elem(dim);
        t.elem(dim);
    } else {
        t.elem(n * dim);
    }
    t.regressor(dim, c.head_hidden);
    Ok(())
}

fn crossvit(t: &mut Tally, c: &BackboneConfig) -> Result<()> {
    let dims = c.dim.pair("dim")?;
    let mlps = c.mlp_dim.pair("mlp_dim")?;
    let patches = c.patch_size.pair("patch_size")?;
    let depths = c.depths.clone().unwrap_or_else(|| vec![c.depth, c.depth]);
    let mut lens = [0; 2];
    for i in 0..2 {
        let n = t.patch_embed(c.input_size, patches[i], dims[i]) + 1;
        for _ in 0..depths[i] {
            t.serial_block(n, dims[i], c.heads, c.dim_head, mlps[i], false);
        }
        lens[i] = n;
    }
    for (own, other) in [(0, 1), (1, 0)] {
        t.linear(1, dims[own], dims[other], true);
        t.token_attention(lens[other] - 1, dims[other], c.heads, c.dim_head);
        t.linear(1, dims[other], dims[own], true);
        t.elem(dims[own]);
    }
    for d in dims {
        t.elem(d);
        t.regressor(d, None);
    }
    t.elem(1);
    Ok(())
}

fn cnn(t: &mut Tally, c: &BackboneConfig) -> Result<()> {
    let mut side = c.input_size;
    let mut input = 3;
    for stage in cnn_channels(c.depth, c.mlp_dim.single("mlp_dim")?) {
        for w in stage {
            t.conv(w, input, 3, side * side, true);
            t.elem(w * side * side);
            input = w;
        }
        side /= 2;
        t.elem(input * side * side * 4);
    }
    t.regressor(input * side * side, None);
    Ok(())
}

fn conv_out(side: usize, k: usize, stride: usize, pad: usize) -> usize {
    (side + 2 * pad - k) / stride + 1
}

fn resnet(t: &mut Tally, c: &BackboneConfig) -> Result<()> {
    let stem = c.dim.single("dim")?;
    let mut side = conv_out(c.input_size, 7, 2, 3);
    t.conv(stem, 3, 7, side * side, false);
    t.elem(2 * stem * side * side);
    side = conv_out(side, 3, 2, 1);
    t.elem(stem * side * side * 9);
    let mut input = stem;
    for (s, &blocks) in c.depths.as_deref().unwrap_or(&[]).iter().enumerate() {
        let width = stem << s;
        let out = width * EXPANSION;
        for k in 0..blocks {
            let stride = if s > 0 && k == 0 { 2 } else { 1 };
            let p_in = side * side;
            t.conv(width, input, 1, p_in, false);
            t.elem(2 * width * p_in);
            let o = conv_out(side, 3, stride, 1);
            let p_out = o * o;
            t.conv(width, width, 3, p_out, false);
            t.elem(2 * width * p_out);
            t.conv(out, width, 1, p_out, false);
            t.elem(out * p_out);
            if stride != 1 || input != out {
                t.conv(out, input, 1, p_out, false);
                t.elem(out * p_out);
            }
            t.elem(2 * out * p_out);
            side = o;
            input = out;
        }
    }
    t.elem(input * side * side);
    t.regressor(input, None);
    Ok(())
}

/// Operation count of one forward pass on a single `3 × S × S` image.
pub fn estimate_flops(config: &BackboneConfig) -> Result<FlopCount> {
    config.validate()?;
    let mut t = Tally::default();
    match config.family {
        Family::Cnn => cnn(&mut t, config)?,
        Family::Resnet => resnet(&mut t, config)?,
        Family::Xcit => xcit(&mut t, config)?,
        Family::Crossvit => crossvit(&mut t, config)?,
        _ => vit(&mut t, config)?,
    }
    Ok(t.0)
}
