use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Slot, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub(crate) struct LayerNormSaved {
    x: Slot,
    gain: Slot,
    shift: Slot,
    xhat: Vec<f32>,
    rstd: Vec<f32>,
    gv: Tensor,
    dim: usize,
}

pub(crate) struct BatchNormSaved {
    x: Slot,
    gamma: Slot,
    beta: Slot,
    xhat: Vec<f32>,
    rstd: Vec<f32>,
    gv: Tensor,
    batch: usize,
    channels: usize,
    plane: usize,
    /// Statistics came from the batch itself, so they depend on `x`.
    batch_stats: bool,
}

/// Running-statistic settings for batch normalization.
#[derive(Clone, Copy, Debug)]
pub struct BatchNormSpec {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f32,
    pub momentum: f32,
}

pub const LAYER_NORM_EPS: f32 = 1e-5;

impl Graph {
    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: &Var) -> Result<Var> {
        let d = *x.shape().last().ok_or_else(|| shape_err("softmax", "scalar input"))?;
        let sx = self.slot(x)?;
        let mut out = x.value().data().to_vec();
        if d > 0 {
            for row in out.chunks_mut(d) {
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let mut sum = 0.0f64;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v as f64;
                }
                let inv = (1.0 / sum) as f32;
                row.iter_mut().for_each(|v| *v *= inv);
            }
        }
        self.add_cost(0, out.len());
        let value = Tensor::from_parts(x.shape().to_vec(), out);
        let saved = value.clone();
        Ok(self.emit(&[sx], value, || Op::Softmax { x: sx, out: saved }))
    }

    /// Layer normalization over the last axis with affine `gain` and `shift`.
    pub fn layer_norm(&mut self, x: &Var, gain: &Var, shift: &Var) -> Result<Var> {
        let d = *x.shape().last().ok_or_else(|| shape_err("layer_norm", "scalar input"))?;
        if gain.shape() != [d] || shift.shape() != [d] || d == 0 {
            return Err(shape_err(
                "layer_norm",
                format!("input {:?}, gain {:?}, shift {:?}", x.shape(), gain.shape(), shift.shape()),
            ));
        }
        let (sx, sg, ss) = (self.slot(x)?, self.slot(gain)?, self.slot(shift)?);
        let xd = x.value().data();
        let rows = xd.len() / d;
        let mut xhat = vec![0.0f32; xd.len()];
        let mut rstd = vec![0.0f32; rows];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS as f64).sqrt();
            rstd[r] = rs as f32;
            for (h, &v) in xhat[r * d..(r + 1) * d].iter_mut().zip(row) {
                *h = ((v as f64 - mean) * rs) as f32;
            }
        }
        let gd = gain.value().data();
        let bd = shift.value().data();
        let out: Vec<f32> =
            xhat.chunks(d).flat_map(|row| row.iter().zip(gd).zip(bd).map(|((h, g), b)| h * g + b)).collect();
        self.add_cost(0, out.len());
        let value = Tensor::from_parts(x.shape().to_vec(), out);
        Ok(self.emit(&[sx, sg, ss], value, || {
            Op::LayerNorm(LayerNormSaved { x: sx, gain: sg, shift: ss, xhat, rstd, gv: gain.value().clone(), dim: d })
        }))
    }

    /// Batch normalization of `[B, C, H, W]`. In training mode the batch
    /// statistics are used and running-statistic updates are queued on the
    /// graph; otherwise the stored running statistics are used.
    pub fn batch_norm2d(
        &mut self,
        x: &Var,
        gamma: &Var,
        beta: &Var,
        store: &ParamStore,
        spec: BatchNormSpec,
    ) -> Result<Var> {
        let xs = x.shape();
        if xs.len() != 4 {
            return Err(shape_err("batch_norm2d", format!("input {xs:?}")));
        }
        let (batch, channels, plane) = (xs[0], xs[1], xs[2] * xs[3]);
        let rm = store.value(spec.running_mean);
        let rv = store.value(spec.running_var);
        if gamma.shape() != [channels]
            || beta.shape() != [channels]
            || rm.shape() != [channels]
            || rv.shape() != [channels]
        {
            return Err(shape_err("batch_norm2d", "per-channel parameter shape"));
        }
        let (sx, sg, sb) = (self.slot(x)?, self.slot(gamma)?, self.slot(beta)?);
        let xd = x.value().data();
        let count = batch * plane;
        let training = self.is_training();
        if training && count < 2 {
            return Err(shape_err("batch_norm2d", "training needs more than one value per channel"));
        }
        let mut mean = vec![0.0f64; channels];
        let mut var = vec![0.0f64; channels];
        if training {
            for c in 0..channels {
                let mut s = 0.0f64;
                for b in 0..batch {
                    let base = (b * channels + c) * plane;
                    s += xd[base..base + plane].iter().map(|&v| v as f64).sum::<f64>();
                }
                let m = s / count as f64;
                let mut q = 0.0f64;
                for b in 0..batch {
                    let base = (b * channels + c) * plane;
                    q += xd[base..base + plane].iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>();
                }
                mean[c] = m;
                var[c] = q / count as f64;
            }
            let mo = spec.momentum as f64;
            let unbias = count as f64 / (count - 1) as f64;
            let new_mean = Tensor::from_parts(
                vec![channels],
                (0..channels).map(|c| ((1.0 - mo) * rm.data()[c] as f64 + mo * mean[c]) as f32).collect(),
            );
            let new_var = Tensor::from_parts(
                vec![channels],
                (0..channels).map(|c| ((1.0 - mo) * rv.data()[c] as f64 + mo * var[c] * unbias) as f32).collect(),
            );
            self.push_buffer_update(spec.running_mean, new_mean);
            self.push_buffer_update(spec.running_var, new_var);
        } else {
            for c in 0..channels {
                mean[c] = rm.data()[c] as f64;
                var[c] = rv.data()[c] as f64;
            }
        }
        let rstd: Vec<f32> = var.iter().map(|v| (1.0 / (v + spec.eps as f64).sqrt()) as f32).collect();
        let gd = gamma.value().data();
        let bd = beta.value().data();
        let mut xhat = vec![0.0f32; xd.len()];
        let mut out = vec![0.0f32; xd.len()];
        for b in 0..batch {
            for c in 0..channels {
                let base = (b * channels + c) * plane;
                let (m, r) = (mean[c] as f32, rstd[c]);
                for i in base..base + plane {
                    let h = (xd[i] - m) * r;
                    xhat[i] = h;
                    out[i] = h * gd[c] + bd[c];
                }
            }
        }
        self.add_cost(0, out.len());
        let value = Tensor::from_parts(xs.to_vec(), out);
        Ok(self.emit(&[sx, sg, sb], value, || {
            Op::BatchNorm(BatchNormSaved {
                x: sx,
                gamma: sg,
                beta: sb,
                xhat,
                rstd,
                gv: gamma.value().clone(),
                batch,
                channels,
                plane,
                batch_stats: training,
            })
        }))
    }

    /// Scales each last-axis vector to unit Euclidean length; vectors shorter
    /// than `eps` are divided by `eps` instead.
    pub fn l2_normalize(&mut self, x: &Var, eps: f32) -> Result<Var> {
        let d = *x.shape().last().ok_or_else(|| shape_err("l2_normalize", "scalar input"))?;
        let sx = self.slot(x)?;
        let mut out = x.value().data().to_vec();
        let mut norms = Vec::with_capacity(out.len() / d.max(1));
        if d > 0 {
            for row in out.chunks_mut(d) {
                let n = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt() as f32;
                let denom = n.max(eps);
                row.iter_mut().for_each(|v| *v /= denom);
                norms.push(n);
            }
        }
        self.add_cost(0, out.len());
        let value = Tensor::from_parts(x.shape().to_vec(), out);
        let saved = value.clone();
        Ok(self.emit(&[sx], value, || Op::L2Normalize { x: sx, out: saved, norms, eps }))
    }
}

pub(crate) fn softmax_backward(y: &Tensor, g: &[f32]) -> Vec<f32> {
    let d = *y.shape().last().unwrap();
    let mut dx = vec![0.0f32; g.len()];
    if d == 0 {
        return dx;
    }
    for ((dr, yr), gr) in dx.chunks_mut(d).zip(y.data().chunks(d)).zip(g.chunks(d)) {
        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| (*y as f64) * (*g as f64)).sum();
        let dot = dot as f32;
        for ((d, y), g) in dr.iter_mut().zip(yr).zip(gr) {
            *d = y * (g - dot);
        }
    }
    dx
}

pub(crate) fn layer_norm_backward(s: &LayerNormSaved, g: &[f32]) -> Vec<(usize, Vec<f32>)> {
    let d = s.dim;
    let gain = s.gv.data();
    let mut out = Vec::new();
    if let Some(slot) = s.x {
        let mut dx = vec![0.0f32; g.len()];
        for (r, (dr, (gr, hr))) in dx.chunks_mut(d).zip(g.chunks(d).zip(s.xhat.chunks(d))).enumerate() {
            let mut sum = 0.0f64;
            let mut sum_h = 0.0f64;
            for ((gv, hv), w) in gr.iter().zip(hr).zip(gain) {
                let dh = (gv * w) as f64;
                sum += dh;
                sum_h += dh * *hv as f64;
            }
            let scale = s.rstd[r] as f64 / d as f64;
            for ((o, (gv, hv)), w) in dr.iter_mut().zip(gr.iter().zip(hr)).zip(gain) {
                let dh = (gv * w) as f64;
                *o = (scale * (d as f64 * dh - sum - *hv as f64 * sum_h)) as f32;
            }
        }
        out.push((slot, dx));
    }
    if let Some(slot) = s.gain {
        let mut acc = vec![0.0f64; d];
        for (gr, hr) in g.chunks(d).zip(s.xhat.chunks(d)) {
            for ((a, gv), hv) in acc.iter_mut().zip(gr).zip(hr) {
                *a += (*gv as f64) * (*hv as f64);
            }
        }
        out.push((slot, acc.into_iter().map(|v| v as f32).collect()));
    }
    if let Some(slot) = s.shift {
        out.push((slot, super::elementwise::sum_trailing(g, d)));
    }
    out
}

pub(crate) fn batch_norm_backward(s: &BatchNormSaved, g: &[f32]) -> Vec<(usize, Vec<f32>)> {
    let (batch, channels, plane) = (s.batch, s.channels, s.plane);
    let mut dgamma = vec![0.0f64; channels];
    let mut dbeta = vec![0.0f64; channels];
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * plane;
            for (gi, xi) in g[base..base + plane].iter().zip(&s.xhat[base..base + plane]) {
                dgamma[c] += (*gi as f64) * (*xi as f64);
                dbeta[c] += *gi as f64;
            }
        }
    }
    let mut out = Vec::new();
    if let Some(slot) = s.x {
        let gamma = s.gv.data();
        let count = (batch * plane) as f64;
        let mut dx = vec![0.0f32; g.len()];
        for b in 0..batch {
            for c in 0..channels {
                let base = (b * channels + c) * plane;
                let k = gamma[c] * s.rstd[c];
                for i in base..base + plane {
                    dx[i] = if s.batch_stats {
                        let v = g[i] as f64 - dbeta[c] / count - s.xhat[i] as f64 * dgamma[c] / count;
                        (k as f64 * v) as f32
                    } else {
                        k * g[i]
                    };
                }
            }
        }
        out.push((slot, dx));
    }
    if let Some(slot) = s.gamma {
        out.push((slot, dgamma.iter().map(|&v| v as f32).collect()));
    }
    if let Some(slot) = s.beta {
        out.push((slot, dbeta.iter().map(|&v| v as f32).collect()));
    }
    out
}

pub(crate) fn l2_normalize_backward(y: &Tensor, norms: &[f32], eps: f32, g: &[f32]) -> Vec<f32> {
    let d = *y.shape().last().unwrap();
    let mut dx = vec![0.0f32; g.len()];
    if d == 0 {
        return dx;
    }
    for (r, ((dr, yr), gr)) in dx.chunks_mut(d).zip(y.data().chunks(d)).zip(g.chunks(d)).enumerate() {
        let n = norms[r];
        if n > eps {
            let dot: f64 = yr.iter().zip(gr).map(|(y, g)| (*y as f64) * (*g as f64)).sum();
            for ((o, y), gv) in dr.iter_mut().zip(yr).zip(gr) {
                *o = ((*gv as f64 - *y as f64 * dot) / n as f64) as f32;
            }
        } else {
            for (o, gv) in dr.iter_mut().zip(gr) {
                *o = gv / eps;
            }
        }
    }
    dx
}
