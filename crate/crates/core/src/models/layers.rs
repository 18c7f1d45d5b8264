//! Parameter-owning building blocks shared by every family.

use microcount_tensor::{init, BatchNormSpec, Conv2dSpec, Graph, ParamId, ParamStore, Tensor, Var};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

const TRUNC_STD: f32 = 0.02;
const BN_MOMENTUM: f32 = 0.1;
const BN_EPS: f32 = 1e-5;

/// Registers named parameters in a store while a model is being built.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
    prefix: Vec<String>,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Self { store, rng: crate::seed::rng(seed), prefix: Vec::new() }
    }

    /// Runs `f` with `name` appended to the parameter-name prefix.
    pub fn scope<T>(&mut self, name: impl std::fmt::Display, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.prefix.push(name.to_string());
        let out = f(self);
        self.prefix.pop();
        out
    }

    fn full_name(&self, name: &str) -> String {
        let mut s = self.prefix.join(".");
        if !s.is_empty() {
            s.push('.');
        }
        s.push_str(name);
        s
    }

    pub fn trainable(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        Ok(self.store.trainable(self.full_name(name), value)?)
    }

    pub fn buffer(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        Ok(self.store.buffer(self.full_name(name), value)?)
    }

    /// Truncated-normal tensor at the transformer initialization scale.
    pub fn trunc_normal(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        let t = init::trunc_normal(shape, TRUNC_STD, &mut self.rng);
        self.trainable(name, t)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn linear(&mut self, name: &str, input: usize, output: usize, bias: bool) -> Result<Linear> {
        self.scope(name, |b| {
            let w = b.trunc_normal("weight", &[input, output])?;
            let bias = if bias { Some(b.trainable("bias", Tensor::zeros([output]))?) } else { None };
            Ok(Linear { w, b: bias, input, output })
        })
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) -> Result<LayerNorm> {
        self.scope(name, |b| {
            Ok(LayerNorm {
                gain: b.trainable("weight", Tensor::ones([dim]))?,
                shift: b.trainable("bias", Tensor::zeros([dim]))?,
                dim,
            })
        })
    }

    pub fn conv(
        &mut self,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        spec: Conv2dSpec,
        bias: bool,
    ) -> Result<Conv> {
        self.scope(name, |b| {
            let cg = input / spec.groups;
            let w = init::kaiming_normal([output, cg, kernel, kernel], cg * kernel * kernel, &mut b.rng);
            let w = b.trainable("weight", w)?;
            let bias = if bias { Some(b.trainable("bias", Tensor::zeros([output]))?) } else { None };
            Ok(Conv { w, b: bias, input, output, kernel, spec })
        })
    }

    pub fn batch_norm(&mut self, name: &str, channels: usize) -> Result<BatchNorm> {
        self.scope(name, |b| {
            Ok(BatchNorm {
                gamma: b.trainable("weight", Tensor::ones([channels]))?,
                beta: b.trainable("bias", Tensor::zeros([channels]))?,
                spec: BatchNormSpec {
                    running_mean: b.buffer("running_mean", Tensor::zeros([channels]))?,
                    running_var: b.buffer("running_var", Tensor::ones([channels]))?,
                    eps: BN_EPS,
                    momentum: BN_MOMENTUM,
                },
            })
        })
    }
}

/// A graph paired with the parameters it reads.
pub struct Fwd<'a> {
    pub g: &'a mut Graph,
    pub store: &'a ParamStore,
}

impl<'a> Fwd<'a> {
    pub fn new(g: &'a mut Graph, store: &'a ParamStore) -> Self {
        Self { g, store }
    }

    pub fn p(&mut self, id: ParamId) -> Var {
        self.g.param(self.store, id)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let w = f.p(self.w);
        let b = self.b.map(|b| f.p(b));
        Ok(f.g.linear(x, &w, b.as_ref())?)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let (g, b) = (f.p(self.gain), f.p(self.shift));
        Ok(f.g.layer_norm(x, &g, &b)?)
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
    pub kernel: usize,
    pub spec: Conv2dSpec,
}

impl Conv {
    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let w = f.p(self.w);
        let b = self.b.map(|b| f.p(b));
        Ok(f.g.conv2d(x, &w, b.as_ref(), self.spec)?)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub spec: BatchNormSpec,
}

impl BatchNorm {
    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let (g, b) = (f.p(self.gamma), f.p(self.beta));
        Ok(f.g.batch_norm2d(x, &g, &b, f.store, self.spec)?)
    }
}

/// `LN → Linear → GELU → Linear`, without the residual.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub norm: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl FeedForward {
    pub fn build(b: &mut Builder, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        b.scope(name, |b| {
            Ok(Self {
                norm: b.layer_norm("norm", dim)?,
                fc1: b.linear("fc1", dim, hidden, true)?,
                fc2: b.linear("fc2", hidden, dim, true)?,
            })
        })
    }

    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let h = self.norm.forward(f, x)?;
        let h = self.fc1.forward(f, &h)?;
        let h = f.g.gelu(&h)?;
        self.fc2.forward(f, &h)
    }
}

/// Non-overlapping square patches flattened and projected, plus learned
/// positional embeddings.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    pub proj: Linear,
    pub pos: ParamId,
    pub patch: usize,
    pub grid: usize,
}

impl PatchEmbed {
    pub fn build(b: &mut Builder, name: &str, input_size: usize, patch: usize, dim: usize) -> Result<Self> {
        let grid = input_size / patch;
        b.scope(name, |b| {
            Ok(Self {
                proj: b.linear("proj", patch * patch * 3, dim, true)?,
                pos: b.trunc_normal("pos", &[grid * grid, dim])?,
                patch,
                grid,
            })
        })
    }

    pub fn tokens(&self) -> usize {
        self.grid * self.grid
    }

    /// `[B, 3, S, S]` images to `[B, N, dim]` tokens.
    pub fn forward(&self, f: &mut Fwd, images: &Var) -> Result<Var> {
        let s = images.shape();
        let (batch, p, n) = (s[0], self.patch, self.grid);
        let x = f.g.reshape(images, &[batch, 3, n, p, n, p])?;
        let x = f.g.permute(&x, &[0, 2, 4, 3, 5, 1])?;
        let x = f.g.reshape(&x, &[batch, n * n, p * p * 3])?;
        let x = self.proj.forward(f, &x)?;
        let pos = f.p(self.pos);
        Ok(f.g.add_trailing(&x, &pos)?)
    }
}

/// Prepends a learned `[1, 1, dim]` token to every sequence in the batch.
pub fn prepend_token(f: &mut Fwd, token: ParamId, x: &Var) -> Result<Var> {
    let t = f.p(token);
    let t = f.g.broadcast_batch(&t, x.shape()[0])?;
    Ok(f.g.concat(&[&t, x], 1)?)
}

/// Token `index` of `[B, N, D]` as `[B, D]`.
pub fn take_token(f: &mut Fwd, x: &Var, index: usize) -> Result<Var> {
    let s = x.shape().to_vec();
    let t = f.g.narrow(x, 1, index, 1)?;
    Ok(f.g.reshape(&t, &[s[0], s[2]])?)
}

/// Maps pooled features `[B, D]` to one count per image, `[B]`.
#[derive(Clone, Debug)]
pub struct Regressor {
    pub hidden: Option<Linear>,
    pub out: Linear,
}

impl Regressor {
    pub fn build(b: &mut Builder, name: &str, dim: usize, hidden: Option<usize>) -> Result<Self> {
        b.scope(name, |b| match hidden {
            Some(h) => Ok(Self { hidden: Some(b.linear("fc1", dim, h, true)?), out: b.linear("fc2", h, 1, true)? }),
            None => Ok(Self { hidden: None, out: b.linear("fc", dim, 1, true)? }),
        })
    }

    pub fn forward(&self, f: &mut Fwd, x: &Var) -> Result<Var> {
        let batch = x.shape()[0];
        let y = match &self.hidden {
            Some(h) => {
                let y = h.forward(f, x)?;
                let y = f.g.relu(&y)?;
                self.out.forward(f, &y)?
            }
            None => self.out.forward(f, x)?,
        };
        Ok(f.g.reshape(&y, &[batch])?)
    }
}
