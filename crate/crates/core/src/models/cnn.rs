//! Plain convolutional stacks and bottleneck residual networks.

use microcount_tensor::{Conv2dSpec, Var};

use super::config::BackboneConfig;
use super::layers::{BatchNorm, Builder, Conv, Fwd, Regressor};
use crate::error::Result;

const SAME3: Conv2dSpec = Conv2dSpec { stride: 1, padding: 1, groups: 1 };

/// Output channels of each conv in each stage. Stage one maps RGB to
/// `out / 4^(depth-1)` channels; each later stage quadruples the width
/// through two doubling convolutions.
pub fn cnn_channels(depth: usize, out: usize) -> Vec<Vec<usize>> {
    let c1 = out >> (2 * (depth - 1));
    (0..depth).map(|s| if s == 0 { vec![c1] } else { vec![c1 << (2 * s - 1), c1 << (2 * s)] }).collect()
}

#[derive(Clone, Debug)]
pub struct CnnNet {
    pub stages: Vec<Vec<Conv>>,
    pub head: Regressor,
}

impl CnnNet {
    pub fn build(b: &mut Builder, cfg: &BackboneConfig) -> Result<Self> {
        let mut input = 3;
        let mut stages = Vec::new();
        for (s, widths) in cnn_channels(cfg.depth, cfg.mlp_dim.single("mlp_dim")?).into_iter().enumerate() {
            let mut convs = Vec::new();
            for (k, w) in widths.into_iter().enumerate() {
                convs.push(b.conv(&format!("stages.{s}.conv{k}"), input, w, 3, SAME3, true)?);
                input = w;
            }
            stages.push(convs);
        }
        let side = cfg.input_size >> cfg.depth;
        let head = Regressor::build(b, "head", input * side * side, None)?;
        Ok(Self { stages, head })
    }

    pub fn forward(&self, f: &mut Fwd, images: &Var) -> Result<Var> {
        let mut x = images.clone();
        for stage in &self.stages {
            for conv in stage {
                x = conv.forward(f, &x)?;
                x = f.g.relu(&x)?;
            }
            x = f.g.max_pool2d(&x, 2, 2, 0)?;
        }
        let batch = x.shape()[0];
        let flat = x.value().numel() / batch;
        let x = f.g.reshape(&x, &[batch, flat])?;
        self.head.forward(f, &x)
    }
}

#[derive(Clone, Debug)]
pub struct Bottleneck {
    pub conv1: Conv,
    pub bn1: BatchNorm,
    pub conv2: Conv,
    pub bn2: BatchNorm,
    pub conv3: Conv,
    pub bn3: BatchNorm,
    pub down: Option<(Conv, BatchNorm)>,
}

pub const EXPANSION: usize = 4;

impl Bottleneck {
    fn build(b: &mut Builder, name: &str, input: usize, width: usize, stride: usize) -> Result<Self> {
        let out = width * EXPANSION;
        let one = Conv2dSpec::default();
        b.scope(name, |b| {
            let down = if stride != 1 || input != out {
                let spec = Conv2dSpec { stride, ..one };
                Some((b.conv("down", input, out, 1, spec, false)?, b.batch_norm("down_bn", out)?))
            } else {
                None
            };
            Ok(Self {
                conv1: b.conv("conv1", input, width, 1, one, false)?,
                bn1: b.batch_norm("bn1", width)?,
                conv2: b.conv("conv2", width, width, 3, Conv2dSpec { stride, padding: 1, groups: 1 }, false)?,
                bn2: b.batch_norm("bn2", width)?,
                conv3: b.conv("conv3", width, out, 1, one, false)?,
                bn3: b.batch_norm("bn3", out)?,
                down,
            })
        })
    }

    fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let h = self.conv1.forward(f, x)?;
        let h = self.bn1.forward(f, &h)?;
        let h = f.g.relu(&h)?;
        let h = self.conv2.forward(f, &h)?;
        let h = self.bn2.forward(f, &h)?;
        let h = f.g.relu(&h)?;
        let h = self.conv3.forward(f, &h)?;
        let h = self.bn3.forward(f, &h)?;
        let skip = match &self.down {
            Some((c, bn)) => {
                let s = c.forward(f, x)?;
                bn.forward(f, &s)?
            }
            None => x.clone(),
        };
        let y = f.g.add(&h, &skip)?;
        Ok(f.g.relu(&y)?)
    }
}

#[derive(Clone, Debug)]
pub struct ResNetNet {
    pub stem: Conv,
    pub stem_bn: BatchNorm,
    pub blocks: Vec<Bottleneck>,
    pub head: Regressor,
}

impl ResNetNet {
    pub fn build(b: &mut Builder, cfg: &BackboneConfig) -> Result<Self> {
        let stem_width = cfg.dim.single("dim")?;
        let stem = b.conv("stem", 3, stem_width, 7, Conv2dSpec { stride: 2, padding: 3, groups: 1 }, false)?;
        let stem_bn = b.batch_norm("stem_bn", stem_width)?;
        let mut blocks = Vec::new();
        let mut input = stem_width;
        for (s, &n) in cfg.depths.as_deref().unwrap_or(&[]).iter().enumerate() {
            let width = stem_width << s;
            for k in 0..n {
                let stride = if s > 0 && k == 0 { 2 } else { 1 };
                blocks.push(Bottleneck::build(b, &format!("stages.{s}.{k}"), input, width, stride)?);
                input = width * EXPANSION;
            }
        }
        let head = Regressor::build(b, "head", input, None)?;
        Ok(Self { stem, stem_bn, blocks, head })
    }

    pub fn forward(&self, f: &mut Fwd, images: &Var) -> Result<Var> {
        let x = self.stem.forward(f, images)?;
        let x = self.stem_bn.forward(f, &x)?;
        let x = f.g.relu(&x)?;
        let mut x = f.g.max_pool2d(&x, 3, 2, 1)?;
        for blk in &self.blocks {
            x = blk.forward(f, &x)?;
        }
        let s = x.shape().to_vec();
        let x = f.g.reshape(&x, &[s[0], s[1], s[2] * s[3]])?;
        let x = f.g.mean_axis(&x, 2)?;
        self.head.forward(f, &x)
    }
}
