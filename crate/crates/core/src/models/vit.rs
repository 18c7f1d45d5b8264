//! Plain token-stack encoders: vanilla ViT, DeepViT (re-attention),
//! Parallel ViT and both TransCrowd heads.

use microcount_tensor::{ParamId, Var};

use super::attention::Attention;
use super::config::{BackboneConfig, Family, HeadType};
use super::layers::{prepend_token, take_token, Builder, FeedForward, Fwd, LayerNorm, PatchEmbed, Regressor};
use crate::error::Result;

/// Attention and feed-forward branches applied side by side to the same input.
#[derive(Clone, Debug)]
pub struct ParallelBlock {
    pub attn: Vec<Attention>,
    pub ff: Vec<FeedForward>,
}

impl ParallelBlock {
    pub fn build(b: &mut Builder, name: &str, cfg: &BlockDims, branches: usize) -> Result<Self> {
        b.scope(name, |b| {
            let attn = (0..branches)
                .map(|i| Attention::build(b, &format!("attn{i}"), cfg.dim, cfg.heads, cfg.dim_head, false))
                .collect::<Result<_>>()?;
            let ff = (0..branches)
                .map(|i| FeedForward::build(b, &format!("ff{i}"), cfg.dim, cfg.mlp))
                .collect::<Result<_>>()?;
            Ok(Self { attn, ff })
        })
    }

    /// `x + Σ attn_i(x)`, then `y + Σ ff_i(y)`.
    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let x = residual_sum(f, x, &self.attn, |a, f, x| a.forward(f, x))?;
        residual_sum(f, &x, &self.ff, |m, f, x| m.forward(f, x))
    }
}

fn residual_sum<T>(
    f: &mut Fwd,
    x: &Var,
    branches: &[T],
    run: impl Fn(&T, &mut Fwd, &Var) -> Result<Var>,
) -> Result<Var> {
    let mut acc = run(&branches[0], f, x)?;
    for br in &branches[1..] {
        let y = run(br, f, x)?;
        acc = f.g.add(&acc, &y)?;
    }
    Ok(f.g.add(x, &acc)?)
}

#[derive(Clone, Copy, Debug)]
pub struct BlockDims {
    pub dim: usize,
    pub heads: usize,
    pub dim_head: usize,
    pub mlp: usize,
}

/// Pre-norm block: `x + attn(x)`, then `x + ff(x)`.
#[derive(Clone, Debug)]
pub struct SerialBlock {
    pub attn: Attention,
    pub ff: FeedForward,
}

impl SerialBlock {
    pub fn build(b: &mut Builder, name: &str, d: &BlockDims, reattn: bool) -> Result<Self> {
        b.scope(name, |b| {
            Ok(Self {
                attn: Attention::build(b, "attn", d.dim, d.heads, d.dim_head, reattn)?,
                ff: FeedForward::build(b, "ff", d.dim, d.mlp)?,
            })
        })
    }

    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let a = self.attn.forward(f, x)?;
        let x = f.g.add(x, &a)?;
        let m = self.ff.forward(f, &x)?;
        Ok(f.g.add(&x, &m)?)
    }
}

#[derive(Clone, Debug)]
pub enum Block {
    Serial(SerialBlock),
    Parallel(ParallelBlock),
}

impl Block {
    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        match self {
            Block::Serial(b) => b.forward(f, x),
            Block::Parallel(b) => b.forward(f, x),
        }
    }
}

/// Branch count of a Parallel ViT block.
pub const PARALLEL_BRANCHES: usize = 2;

#[derive(Clone, Debug)]
pub struct VitNet {
    pub embed: PatchEmbed,
    pub token: ParamId,
    pub blocks: Vec<Block>,
    pub norm: LayerNorm,
    pub head_type: HeadType,
    pub head: Regressor,
}

impl VitNet {
    pub fn build(b: &mut Builder, cfg: &BackboneConfig) -> Result<Self> {
        let dim = cfg.dim.single("dim")?;
        let d = BlockDims { dim, heads: cfg.heads, dim_head: cfg.dim_head, mlp: cfg.mlp_dim.single("mlp_dim")? };
        let embed = PatchEmbed::build(b, "embed", cfg.input_size, cfg.patch_size.single("patch_size")?, dim)?;
        let token = b.trunc_normal("token", &[1, 1, dim])?;
        let blocks = (0..cfg.depth)
            .map(|i| {
                let name = format!("blocks.{i}");
                Ok(match cfg.family {
                    Family::Parallelvit => Block::Parallel(ParallelBlock::build(b, &name, &d, PARALLEL_BRANCHES)?),
                    fam => Block::Serial(SerialBlock::build(b, &name, &d, fam == Family::Deepvit)?),
                })
            })
            .collect::<Result<_>>()?;
        let norm = b.layer_norm("norm", dim)?;
        let head = Regressor::build(b, "head", dim, cfg.head_hidden)?;
        Ok(Self { embed, token, blocks, norm, head_type: cfg.head_type, head })
    }

    /// Final-normalized token sequence `[B, 1 + N, dim]`.
    pub fn encode(&self, f: &mut Fwd, images: &Var) -> Result<Var> {
        let x = self.embed.forward(f, images)?;
        let mut x = prepend_token(f, self.token, &x)?;
        for blk in &self.blocks {
            x = blk.forward(f, &x)?;
        }
        self.norm.forward(f, &x)
    }

    pub fn forward(&self, f: &mut Fwd, images: &Var) -> Result<Var> {
        let x = self.encode(f, images)?;
        let pooled = match self.head_type {
            HeadType::Gap => f.g.mean_axis(&x, 1)?,
            _ => take_token(f, &x, 0)?,
        };
        self.head.forward(f, &pooled)
    }
}
