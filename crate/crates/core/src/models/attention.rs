//! Self-attention, re-attention, cross-covariance attention and the
//! single-query attention used by class tokens.

use microcount_tensor::{ParamId, Tensor, Var};

use super::layers::{Builder, Fwd, LayerNorm, Linear};
use crate::error::Result;

const XCA_EPS: f32 = 1e-12;

/// `softmax(q·kᵀ·scale)` over the last axis; `q: [.., M, d]`, `k: [.., N, d]`.
pub fn attention_maps(f: &mut Fwd, q: &Var, k: &Var, scale: f32) -> Result<Var> {
    let dots = f.g.matmul_t(q, k, false, true)?;
    let dots = f.g.scale(&dots, scale)?;
    Ok(f.g.softmax(&dots)?)
}

/// Row-normalized non-negative head-mixing matrix: `|Θ|` divided by its row sums.
pub fn mixing_matrix(f: &mut Fwd, theta: &Var) -> Result<Var> {
    let h = theta.shape()[0];
    let a = f.g.abs(theta)?;
    let mean = f.g.mean_axis(&a, 1)?;
    let inv = f.g.recip(&mean)?;
    let t = f.g.transpose(&a, 0, 1)?;
    let t = f.g.mul_trailing(&t, &inv)?;
    let t = f.g.transpose(&t, 0, 1)?;
    Ok(f.g.scale(&t, 1.0 / h as f32)?)
}

/// Mixes per-head attention maps `[B, h, N, M]` across heads:
/// `new[i] = Σ_k Θn[i, k]·maps[k]` with Θn from [`mixing_matrix`]. Every
/// output row is a convex combination of stochastic rows, so it stays
/// stochastic.
pub fn re_attention(f: &mut Fwd, maps: &Var, theta: &Var) -> Result<Var> {
    let s = maps.shape().to_vec();
    let (b, h, n, m) = (s[0], s[1], s[2], s[3]);
    let mix = mixing_matrix(f, theta)?;
    let x = f.g.reshape(maps, &[b, h, n * m])?;
    let x = f.g.transpose(&x, 1, 2)?;
    let x = f.g.matmul_t(&x, &mix, false, true)?;
    let x = f.g.transpose(&x, 1, 2)?;
    Ok(f.g.reshape(&x, &[b, h, n, m])?)
}

/// Splits a fused projection `[B, N, parts·h·dh]` into `parts` tensors laid
/// out by `axes` after reshaping to `[B, N, parts, h, dh]`.
fn split_heads(f: &mut Fwd, x: &Var, parts: usize, heads: usize, axes: &[usize]) -> Result<Vec<Var>> {
    let s = x.shape().to_vec();
    let (b, n) = (s[0], s[1]);
    let dh = s[2] / (parts * heads);
    let x = f.g.reshape(x, &[b, n, parts, heads, dh])?;
    let x = f.g.permute(&x, axes)?;
    let per: Vec<usize> = x.shape()[1..].to_vec();
    (0..parts)
        .map(|i| {
            let t = f.g.narrow(&x, 0, i, 1)?;
            Ok(f.g.reshape(&t, &per)?)
        })
        .collect()
}

/// `[B, h, N, dh]` back to `[B, N, h·dh]`.
fn merge_heads(f: &mut Fwd, x: &Var) -> Result<Var> {
    let s = x.shape().to_vec();
    let x = f.g.permute(x, &[0, 2, 1, 3])?;
    Ok(f.g.reshape(&x, &[s[0], s[2], s[1] * s[3]])?)
}

/// Pre-norm multi-head self-attention, optionally with re-attention.
#[derive(Clone, Debug)]
pub struct Attention {
    pub norm: LayerNorm,
    pub qkv: Linear,
    pub out: Linear,
    pub reattn: Option<ParamId>,
    pub heads: usize,
    pub dim_head: usize,
}

impl Attention {
    pub fn build(b: &mut Builder, name: &str, dim: usize, heads: usize, dim_head: usize, reattn: bool) -> Result<Self> {
        let inner = heads * dim_head;
        b.scope(name, |b| {
            let norm = b.layer_norm("norm", dim)?;
            let qkv = b.linear("qkv", dim, 3 * inner, false)?;
            let reattn = if reattn {
                use rand::Rng;
                let noise: Vec<f32> = (0..heads * heads).map(|_| b.rng().random_range(0.01..0.05)).collect();
                let theta = Tensor::from_fn([heads, heads], |i| if i / heads == i % heads { 1.0 } else { noise[i] });
                Some(b.trainable("reattn", theta)?)
            } else {
                None
            };
            let out = b.linear("out", inner, dim, true)?;
            Ok(Self { norm, qkv, out, reattn, heads, dim_head })
        })
    }

    /// Output (without residual) and the attention maps `[B, h, N, N]`
    /// actually applied to the values.
    pub fn forward_with_maps(&self, f: &mut Fwd, x: &Var) -> Result<(Var, Var)> {
        let h = self.norm.forward(f, x)?;
        let qkv = self.qkv.forward(f, &h)?;
        let parts = split_heads(f, &qkv, 3, self.heads, &[2, 0, 3, 1, 4])?;
        let mut maps = attention_maps(f, &parts[0], &parts[1], (self.dim_head as f32).powf(-0.5))?;
        if let Some(theta) = self.reattn {
            let theta = f.p(theta);
            maps = re_attention(f, &maps, &theta)?;
        }
        let y = f.g.matmul(&maps, &parts[2])?;
        let y = merge_heads(f, &y)?;
        Ok((self.out.forward(f, &y)?, maps))
    }

    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        Ok(self.forward_with_maps(f, x)?.0)
    }
}

/// Cross-covariance attention: channels attend to channels within each
/// head, so the map is `dh × dh` whatever the token count.
#[derive(Clone, Debug)]
pub struct XcaAttention {
    pub norm: LayerNorm,
    pub qkv: Linear,
    pub temperature: ParamId,
    pub out: Linear,
    pub heads: usize,
}

/// `softmax(q̂·k̂ᵀ·τ)` for `q, k: [B, h, dh, N]` L2-normalized along tokens
/// and a per-head temperature `τ: [h]`.
pub fn xca_maps(f: &mut Fwd, q: &Var, k: &Var, temperature: &Var) -> Result<Var> {
    let q = f.g.l2_normalize(q, XCA_EPS)?;
    let k = f.g.l2_normalize(k, XCA_EPS)?;
    let a = f.g.matmul_t(&q, &k, false, true)?;
    let a = f.g.permute(&a, &[0, 2, 3, 1])?;
    let a = f.g.mul_trailing(&a, temperature)?;
    let a = f.g.permute(&a, &[0, 3, 1, 2])?;
    Ok(f.g.softmax(&a)?)
}

impl XcaAttention {
    pub fn build(b: &mut Builder, name: &str, dim: usize, heads: usize, dim_head: usize) -> Result<Self> {
        let inner = heads * dim_head;
        b.scope(name, |b| {
            Ok(Self {
                norm: b.layer_norm("norm", dim)?,
                qkv: b.linear("qkv", dim, 3 * inner, false)?,
                temperature: b.trainable("temperature", Tensor::ones([heads]))?,
                out: b.linear("out", inner, dim, true)?,
                heads,
            })
        })
    }

    /// Output (without residual) and the channel maps `[B, h, dh, dh]`.
    pub fn forward_with_maps(&self, f: &mut Fwd, x: &Var) -> Result<(Var, Var)> {
        let h = self.norm.forward(f, x)?;
        let qkv = self.qkv.forward(f, &h)?;
        // [B, h, dh, N]
        let parts = split_heads(f, &qkv, 3, self.heads, &[2, 0, 3, 4, 1])?;
        let temp = f.p(self.temperature);
        let maps = xca_maps(f, &parts[0], &parts[1], &temp)?;
        let y = f.g.matmul(&maps, &parts[2])?;
        // [B, h, dh, N] -> [B, N, h, dh]
        let s = y.shape().to_vec();
        let y = f.g.permute(&y, &[0, 3, 1, 2])?;
        let y = f.g.reshape(&y, &[s[0], s[3], s[1] * s[2]])?;
        Ok((self.out.forward(f, &y)?, maps))
    }

    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        Ok(self.forward_with_maps(f, x)?.0)
    }
}

/// One query token attending over itself followed by a context sequence.
/// The query is normalized; the context is used as given.
#[derive(Clone, Debug)]
pub struct TokenAttention {
    pub norm: LayerNorm,
    pub to_q: Linear,
    pub to_kv: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim_head: usize,
}

impl TokenAttention {
    pub fn build(b: &mut Builder, name: &str, dim: usize, heads: usize, dim_head: usize) -> Result<Self> {
        let inner = heads * dim_head;
        b.scope(name, |b| {
            Ok(Self {
                norm: b.layer_norm("norm", dim)?,
                to_q: b.linear("to_q", dim, inner, false)?,
                to_kv: b.linear("to_kv", dim, 2 * inner, false)?,
                out: b.linear("out", inner, dim, true)?,
                heads,
                dim_head,
            })
        })
    }

    /// `token: [B, 1, dim]`, `context: [B, N, dim]`; returns `[B, 1, dim]`
    /// without the residual.
    pub fn forward(&self, f: &mut Fwd, token: &Var, context: &Var) -> Result<Var> {
        let t = self.norm.forward(f, token)?;
        let ctx = f.g.concat(&[&t, context], 1)?;
        let q = self.to_q.forward(f, &t)?;
        let q = split_heads(f, &q, 1, self.heads, &[2, 0, 3, 1, 4])?.remove(0);
        let kv = self.to_kv.forward(f, &ctx)?;
        let kv = split_heads(f, &kv, 2, self.heads, &[2, 0, 3, 1, 4])?;
        let maps = attention_maps(f, &q, &kv[0], (self.dim_head as f32).powf(-0.5))?;
        let y = f.g.matmul(&maps, &kv[1])?;
        let y = merge_heads(f, &y)?;
        self.out.forward(f, &y)
    }
}
