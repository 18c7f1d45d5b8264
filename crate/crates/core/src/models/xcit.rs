//! Cross-covariance image transformer.

use microcount_tensor::{Conv2dSpec, ParamId, Var};

use super::attention::{TokenAttention, XcaAttention};
use super::config::{BackboneConfig, HeadType};
use super::layers::{take_token, BatchNorm, Builder, Conv, FeedForward, Fwd, LayerNorm, PatchEmbed, Regressor};
use crate::error::Result;

/// Local patch interaction: two depthwise 3×3 convolutions over the token grid.
#[derive(Clone, Debug)]
pub struct Lpi {
    pub norm: LayerNorm,
    pub conv1: Conv,
    pub bn: BatchNorm,
    pub conv2: Conv,
    pub grid: usize,
}

impl Lpi {
    pub fn build(b: &mut Builder, name: &str, dim: usize, grid: usize) -> Result<Self> {
        let spec = Conv2dSpec { stride: 1, padding: 1, groups: dim };
        b.scope(name, |b| {
            Ok(Self {
                norm: b.layer_norm("norm", dim)?,
                conv1: b.conv("conv1", dim, dim, 3, spec, true)?,
                bn: b.batch_norm("bn", dim)?,
                conv2: b.conv("conv2", dim, dim, 3, spec, true)?,
                grid,
            })
        })
    }

    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let s = x.shape().to_vec();
        let (batch, n, dim) = (s[0], s[1], s[2]);
        let h = self.norm.forward(f, x)?;
        let h = f.g.permute(&h, &[0, 2, 1])?;
        let h = f.g.reshape(&h, &[batch, dim, self.grid, self.grid])?;
        let h = self.conv1.forward(f, &h)?;
        let h = self.bn.forward(f, &h)?;
        let h = f.g.gelu(&h)?;
        let h = self.conv2.forward(f, &h)?;
        let h = f.g.reshape(&h, &[batch, dim, n])?;
        Ok(f.g.permute(&h, &[0, 2, 1])?)
    }
}

#[derive(Clone, Debug)]
pub struct XcitBlock {
    pub xca: XcaAttention,
    pub lpi: Lpi,
    pub ff: FeedForward,
}

impl XcitBlock {
    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let a = self.xca.forward(f, x)?;
        let x = f.g.add(x, &a)?;
        let l = self.lpi.forward(f, &x)?;
        let x = f.g.add(&x, &l)?;
        let m = self.ff.forward(f, &x)?;
        Ok(f.g.add(&x, &m)?)
    }
}

/// Class token refined by attending over the patch tokens.
#[derive(Clone, Debug)]
pub struct ClassHead {
    pub token: ParamId,
    pub attn: TokenAttention,
    pub ff: FeedForward,
    pub norm: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct XcitNet {
    pub embed: PatchEmbed,
    pub blocks: Vec<XcitBlock>,
    pub norm: LayerNorm,
    pub class: Option<ClassHead>,
    pub head: Regressor,
}

impl XcitNet {
    pub fn build(b: &mut Builder, cfg: &BackboneConfig) -> Result<Self> {
        let dim = cfg.dim.single("dim")?;
        let mlp = cfg.mlp_dim.single("mlp_dim")?;
        let embed = PatchEmbed::build(b, "embed", cfg.input_size, cfg.patch_size.single("patch_size")?, dim)?;
        let grid = embed.grid;
        let blocks = (0..cfg.depth)
            .map(|i| {
                b.scope(format!("blocks.{i}"), |b| {
                    Ok(XcitBlock {
                        xca: XcaAttention::build(b, "xca", dim, cfg.heads, cfg.dim_head)?,
                        lpi: Lpi::build(b, "lpi", dim, grid)?,
                        ff: FeedForward::build(b, "ff", dim, mlp)?,
                    })
                })
            })
            .collect::<Result<_>>()?;
        let norm = b.layer_norm("norm", dim)?;
        let class = match cfg.head_type {
            HeadType::Token => Some(b.scope("class", |b| {
                Ok(ClassHead {
                    token: b.trunc_normal("token", &[1, 1, dim])?,
                    attn: TokenAttention::build(b, "attn", dim, cfg.heads, cfg.dim_head)?,
                    ff: FeedForward::build(b, "ff", dim, mlp)?,
                    norm: b.layer_norm("norm", dim)?,
                })
            })?),
            _ => None,
        };
        let head = Regressor::build(b, "head", dim, cfg.head_hidden)?;
        Ok(Self { embed, blocks, norm, class, head })
    }

    pub fn forward(&self, f: &mut Fwd, images: &Var) -> Result<Var> {
        let mut x = self.embed.forward(f, images)?;
        for blk in &self.blocks {
            x = blk.forward(f, &x)?;
        }
        let x = self.norm.forward(f, &x)?;
        let pooled = match &self.class {
            Some(c) => {
                let batch = x.shape()[0];
                let t = f.p(c.token);
                let t = f.g.broadcast_batch(&t, batch)?;
                let a = c.attn.forward(f, &t, &x)?;
                let t = f.g.add(&t, &a)?;
                let m = c.ff.forward(f, &t)?;
                let t = f.g.add(&t, &m)?;
                let t = c.norm.forward(f, &t)?;
                take_token(f, &t, 0)?
            }
            None => f.g.mean_axis(&x, 1)?,
        };
        self.head.forward(f, &pooled)
    }
}
