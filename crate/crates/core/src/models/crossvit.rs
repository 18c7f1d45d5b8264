//! Dual-branch transformer over two patch granularities, fused by
//! class-token cross attention.

use microcount_tensor::{ParamId, Var};

use super::attention::TokenAttention;
use super::config::BackboneConfig;
use super::layers::{prepend_token, take_token, Builder, Fwd, LayerNorm, Linear, PatchEmbed, Regressor};
use super::vit::{BlockDims, SerialBlock};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Branch {
    pub embed: PatchEmbed,
    pub cls: ParamId,
    pub blocks: Vec<SerialBlock>,
    pub head_norm: LayerNorm,
    pub head: Regressor,
}

impl Branch {
    fn build(b: &mut Builder, name: &str, cfg: &BackboneConfig, i: usize) -> Result<Self> {
        let dim = cfg.dim.pair("dim")?[i];
        let d = BlockDims { dim, heads: cfg.heads, dim_head: cfg.dim_head, mlp: cfg.mlp_dim.pair("mlp_dim")?[i] };
        let depth = cfg.depths.as_ref().map_or(cfg.depth, |v| v[i]);
        b.scope(name, |b| {
            Ok(Self {
                embed: PatchEmbed::build(b, "embed", cfg.input_size, cfg.patch_size.pair("patch_size")?[i], dim)?,
                cls: b.trunc_normal("cls", &[1, 1, dim])?,
                blocks: (0..depth)
                    .map(|k| SerialBlock::build(b, &format!("blocks.{k}"), &d, false))
                    .collect::<Result<_>>()?,
                head_norm: b.layer_norm("head_norm", dim)?,
                head: Regressor::build(b, "head", dim, None)?,
            })
        })
    }

    fn encode(&self, f: &mut Fwd, images: &Var) -> Result<Var> {
        let x = self.embed.forward(f, images)?;
        let mut x = prepend_token(f, self.cls, &x)?;
        for blk in &self.blocks {
            x = blk.forward(f, &x)?;
        }
        Ok(x)
    }
}

/// Class token of one branch projected into the other branch's width,
/// attending over that branch's patches, and projected back as a residual.
#[derive(Clone, Debug)]
pub struct CrossFuse {
    pub proj_in: Linear,
    pub attn: TokenAttention,
    pub proj_out: Linear,
}

impl CrossFuse {
    pub fn build(b: &mut Builder, name: &str, own: usize, other: usize, heads: usize, dim_head: usize) -> Result<Self> {
        b.scope(name, |b| {
            Ok(Self {
                proj_in: b.linear("proj_in", own, other, true)?,
                attn: TokenAttention::build(b, "attn", other, heads, dim_head)?,
                proj_out: b.linear("proj_out", other, own, true)?,
            })
        })
    }

    /// `cls: [B, 1, own]`, `patches: [B, N, other]`.
    pub fn forward(&self, f: &mut Fwd, cls: &Var, patches: &Var) -> Result<Var> {
        let c = self.proj_in.forward(f, cls)?;
        let a = self.attn.forward(f, &c, patches)?;
        let a = self.proj_out.forward(f, &a)?;
        Ok(f.g.add(cls, &a)?)
    }
}

/// Exchanges class-token information between `[B, 1 + Ns, ds]` and
/// `[B, 1 + Nl, dl]` sequences; patch tokens pass through unchanged.
pub fn cross_attention_fuse(
    f: &mut Fwd,
    small_to_large: &CrossFuse,
    large_to_small: &CrossFuse,
    small: &Var,
    large: &Var,
) -> Result<(Var, Var)> {
    let split = |f: &mut Fwd, x: &Var| -> Result<(Var, Var)> {
        let n = x.shape()[1];
        Ok((f.g.narrow(x, 1, 0, 1)?, f.g.narrow(x, 1, 1, n - 1)?))
    };
    let (cs, ps) = split(f, small)?;
    let (cl, pl) = split(f, large)?;
    let cs2 = small_to_large.forward(f, &cs, &pl)?;
    let cl2 = large_to_small.forward(f, &cl, &ps)?;
    Ok((f.g.concat(&[&cs2, &ps], 1)?, f.g.concat(&[&cl2, &pl], 1)?))
}

#[derive(Clone, Debug)]
pub struct CrossVitNet {
    pub small: Branch,
    pub large: Branch,
    pub small_to_large: CrossFuse,
    pub large_to_small: CrossFuse,
}

impl CrossVitNet {
    pub fn build(b: &mut Builder, cfg: &BackboneConfig) -> Result<Self> {
        let [ds, dl] = cfg.dim.pair("dim")?;
        Ok(Self {
            small: Branch::build(b, "small", cfg, 0)?,
            large: Branch::build(b, "large", cfg, 1)?,
            small_to_large: CrossFuse::build(b, "fuse_small", ds, dl, cfg.heads, cfg.dim_head)?,
            large_to_small: CrossFuse::build(b, "fuse_large", dl, ds, cfg.heads, cfg.dim_head)?,
        })
    }

    pub fn forward(&self, f: &mut Fwd, images: &Var) -> Result<Var> {
        let xs = self.small.encode(f, images)?;
        let xl = self.large.encode(f, images)?;
        let (xs, xl) = cross_attention_fuse(f, &self.small_to_large, &self.large_to_small, &xs, &xl)?;
        let mut out = Vec::with_capacity(2);
        for (br, x) in [(&self.small, &xs), (&self.large, &xl)] {
            let t = take_token(f, x, 0)?;
            let t = br.head_norm.forward(f, &t)?;
            out.push(br.head.forward(f, &t)?);
        }
        Ok(f.g.add(&out[0], &out[1])?)
    }
}
