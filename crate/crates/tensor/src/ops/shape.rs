use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::{numel, strides, Tensor};

pub(crate) fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Reorders a contiguous tensor of shape `shape` so that output axis `i` is
/// input axis `axes[i]`.
pub(crate) fn permute_data(data: &[f32], shape: &[usize], axes: &[usize]) -> Vec<f32> {
    let total = data.len();
    let mut out = vec![0.0f32; total];
    if total == 0 {
        return out;
    }
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let rank = out_shape.len();
    if rank == 0 {
        out.copy_from_slice(data);
        return out;
    }
    let last = out_shape[rank - 1];
    let last_stride = src_strides[rank - 1];
    let mut index = vec![0usize; rank - 1];
    let mut base = 0usize;
    for row in out.chunks_mut(last) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = data[base + j * last_stride];
        }
        for ax in (0..rank - 1).rev() {
            index[ax] += 1;
            base += src_strides[ax];
            if index[ax] < out_shape[ax] {
                break;
            }
            base -= src_strides[ax] * out_shape[ax];
            index[ax] = 0;
        }
    }
    out
}

/// Copies `[outer, len, inner]` starting at `start` out of `[outer, full, inner]`.
pub(crate) fn narrow_data(data: &[f32], outer: usize, full: usize, start: usize, len: usize, inner: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let at = (o * full + start) * inner;
        out.extend_from_slice(&data[at..at + len * inner]);
    }
    out
}

impl Graph {
    pub fn reshape(&mut self, x: &Var, shape: &[usize]) -> Result<Var> {
        let sx = self.slot(x)?;
        let value = x.value().reshape(shape.to_vec())?;
        Ok(self.emit(&[sx], value, || Op::Reshape { x: sx }))
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: &Var, axes: &[usize]) -> Result<Var> {
        let shape = x.shape();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true))
        {
            return Err(shape_err("permute", format!("axes {axes:?} for shape {shape:?}")));
        }
        let sx = self.slot(x)?;
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let value = Tensor::from_parts(out_shape, permute_data(x.value().data(), shape, axes));
        let in_shape = shape.to_vec();
        let axes = axes.to_vec();
        Ok(self.emit(&[sx], value, || Op::Permute { x: sx, in_shape, axes }))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, x: &Var, a: usize, b: usize) -> Result<Var> {
        let mut axes: Vec<usize> = (0..x.shape().len()).collect();
        if a >= axes.len() || b >= axes.len() {
            return Err(shape_err("transpose", format!("axes {a},{b} of {:?}", x.shape())));
        }
        axes.swap(a, b);
        self.permute(x, &axes)
    }

    pub fn concat(&mut self, xs: &[&Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} of {base:?}")));
        }
        for x in xs {
            let s = x.shape();
            if s.len() != base.len() || s[..axis] != base[..axis] || s[axis + 1..] != base[axis + 1..] {
                return Err(shape_err("concat", format!("{s:?} vs {base:?}")));
            }
        }
        let slots = xs.iter().map(|x| self.slot(x)).collect::<Result<Vec<_>>>()?;
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let lens: Vec<usize> = xs.iter().map(|x| x.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (x, &len) in xs.iter().zip(&lens) {
                out.extend_from_slice(&x.value().data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base.to_vec();
        shape[axis] = total;
        let value = Tensor::from_parts(shape, out);
        Ok(self.emit(&slots.clone(), value, || Op::Concat { xs: slots, outer, lens, inner }))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn narrow(&mut self, x: &Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = x.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(shape_err("narrow", format!("{start}+{len} on axis {axis} of {shape:?}")));
        }
        let sx = self.slot(x)?;
        let outer: usize = shape[..axis].iter().product();
        let full = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let data = narrow_data(x.value().data(), outer, full, start, len, inner);
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.emit(&[sx], value, || Op::Narrow { x: sx, outer, full, start, len, inner }))
    }

    /// Repeats a `[1, ...]` tensor `copies` times along the first axis.
    pub fn broadcast_batch(&mut self, x: &Var, copies: usize) -> Result<Var> {
        let shape = x.shape();
        if shape.first() != Some(&1) {
            return Err(shape_err("broadcast_batch", format!("leading axis of {shape:?} must be 1")));
        }
        let sx = self.slot(x)?;
        let mut out_shape = shape.to_vec();
        out_shape[0] = copies;
        let src = x.value().data();
        let mut data = Vec::with_capacity(numel(&out_shape));
        for _ in 0..copies {
            data.extend_from_slice(src);
        }
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.emit(&[sx], value, || Op::BroadcastBatch { x: sx, copies }))
    }
}
