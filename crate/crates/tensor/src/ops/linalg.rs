use crate::error::{shape_err, Result};
use crate::gemm::{gemm, MatRef};
use crate::graph::{Graph, Op, Slot, Var};
use crate::ops::elementwise::sum_trailing;
use crate::par;
use crate::tensor::Tensor;

pub(crate) struct MatMulSaved {
    a: Slot,
    b: Slot,
    av: Tensor,
    bv: Tensor,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
    shared_b: bool,
}

pub(crate) struct LinearSaved {
    x: Slot,
    w: Slot,
    bias: Slot,
    xv: Tensor,
    wv: Tensor,
    rows: usize,
    fan_in: usize,
    fan_out: usize,
}

/// Stored (not logical) dimensions of one matrix operand.
fn stored(rows: usize, cols: usize, transposed: bool) -> (usize, usize) {
    if transposed {
        (cols, rows)
    } else {
        (rows, cols)
    }
}

impl Graph {
    /// Batched `op(a)·op(b)` over the last two axes. `b` is either batched
    /// like `a` or a single matrix shared across the batch.
    pub fn matmul_t(&mut self, a: &Var, b: &Var, ta: bool, tb: bool) -> Result<Var> {
        let (ash, bsh) = (a.shape(), b.shape());
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(shape_err("matmul", "operands need rank >= 2"));
        }
        let ra = ash.len();
        let rb = bsh.len();
        let (m, k) = if ta { (ash[ra - 1], ash[ra - 2]) } else { (ash[ra - 2], ash[ra - 1]) };
        let (kb, n) = if tb { (bsh[rb - 1], bsh[rb - 2]) } else { (bsh[rb - 2], bsh[rb - 1]) };
        if k != kb {
            return Err(shape_err("matmul", format!("inner dims {k} vs {kb}")));
        }
        let shared_b = rb == 2 && ra > 2;
        if !shared_b && ash[..ra - 2] != bsh[..rb - 2] {
            return Err(shape_err("matmul", format!("batch dims {ash:?} vs {bsh:?}")));
        }
        let batch: usize = ash[..ra - 2].iter().product();
        let (sa, sb) = (self.slot(a)?, self.slot(b)?);
        let (ad, bd) = (a.value().data(), b.value().data());
        let (a_rows, a_cols) = stored(m, k, ta);
        let (b_rows, b_cols) = stored(k, n, tb);
        let mut out = vec![0.0f32; batch * m * n];
        par::for_each_chunk_mut(&mut out, (m * n).max(1), |i, c| {
            let am = MatRef::new(&ad[i * m * k..], a_rows, a_cols).maybe_t(ta);
            let boff = if shared_b { 0 } else { i * k * n };
            let bm = MatRef::new(&bd[boff..], b_rows, b_cols).maybe_t(tb);
            gemm(am, bm, c, false);
        });
        let mut shape = ash[..ra - 2].to_vec();
        shape.extend([m, n]);
        self.add_cost(batch * m * n * k, 0);
        let value = Tensor::from_parts(shape, out);
        Ok(self.emit(&[sa, sb], value, || {
            Op::MatMul(MatMulSaved {
                a: sa,
                b: sb,
                av: a.value().clone(),
                bv: b.value().clone(),
                batch,
                m,
                k,
                n,
                ta,
                tb,
                shared_b,
            })
        }))
    }

    pub fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `x·w + bias` over the last axis of `x`; `w` is `[in, out]`.
    pub fn linear(&mut self, x: &Var, w: &Var, bias: Option<&Var>) -> Result<Var> {
        let xs = x.shape();
        let ws = w.shape();
        if ws.len() != 2 || xs.is_empty() || xs[xs.len() - 1] != ws[0] {
            return Err(shape_err("linear", format!("input {xs:?} with weight {ws:?}")));
        }
        let (fan_in, fan_out) = (ws[0], ws[1]);
        if let Some(b) = bias {
            if b.shape() != [fan_out] {
                return Err(shape_err("linear", format!("bias {:?}", b.shape())));
            }
        }
        let rows = x.value().numel() / fan_in.max(1);
        let sx = self.slot(x)?;
        let sw = self.slot(w)?;
        let sbias = match bias {
            Some(b) => self.slot(b)?,
            None => None,
        };
        let mut out = vec![0.0f32; rows * fan_out];
        gemm(
            MatRef::new(x.value().data(), rows, fan_in),
            MatRef::new(w.value().data(), fan_in, fan_out),
            &mut out,
            false,
        );
        if let Some(b) = bias {
            let bd = b.value().data();
            for row in out.chunks_mut(fan_out.max(1)) {
                row.iter_mut().zip(bd).for_each(|(o, b)| *o += b);
            }
        }
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = fan_out;
        self.add_cost(rows * fan_in * fan_out, if bias.is_some() { rows * fan_out } else { 0 });
        let value = Tensor::from_parts(shape, out);
        Ok(self.emit(&[sx, sw, sbias], value, || {
            Op::Linear(LinearSaved {
                x: sx,
                w: sw,
                bias: sbias,
                xv: x.value().clone(),
                wv: w.value().clone(),
                rows,
                fan_in,
                fan_out,
            })
        }))
    }
}

pub(crate) fn matmul_backward(s: &MatMulSaved, g: &[f32]) -> Vec<(usize, Vec<f32>)> {
    let (m, k, n) = (s.m, s.k, s.n);
    let (a_rows, a_cols) = stored(m, k, s.ta);
    let (b_rows, b_cols) = stored(k, n, s.tb);
    let ad = s.av.data();
    let bd = s.bv.data();
    let op_a = |i: usize| MatRef::new(&ad[i * m * k..], a_rows, a_cols).maybe_t(s.ta);
    let op_b = |i: usize| {
        let off = if s.shared_b { 0 } else { i * k * n };
        MatRef::new(&bd[off..], b_rows, b_cols).maybe_t(s.tb)
    };
    let dc = |i: usize| MatRef::new(&g[i * m * n..], m, n);
    let mut out = Vec::new();
    if let Some(slot) = s.a {
        let mut da = vec![0.0f32; s.batch * m * k];
        par::for_each_chunk_mut(&mut da, (m * k).max(1), |i, d| {
            if s.ta {
                gemm(op_b(i), dc(i).t(), d, false);
            } else {
                gemm(dc(i), op_b(i).t(), d, false);
            }
        });
        out.push((slot, da));
    }
    if let Some(slot) = s.b {
        let per = |i: usize, d: &mut [f32], acc: bool| {
            if s.tb {
                gemm(dc(i).t(), op_a(i), d, acc);
            } else {
                gemm(op_a(i).t(), dc(i), d, acc);
            }
        };
        let db = if s.shared_b {
            let mut db = vec![0.0f32; k * n];
            for i in 0..s.batch {
                per(i, &mut db, i > 0);
            }
            db
        } else {
            let mut db = vec![0.0f32; s.batch * k * n];
            par::for_each_chunk_mut(&mut db, (k * n).max(1), |i, d| per(i, d, false));
            db
        };
        out.push((slot, db));
    }
    out
}

pub(crate) fn linear_backward(s: &LinearSaved, g: &[f32]) -> Vec<(usize, Vec<f32>)> {
    let dy = MatRef::new(g, s.rows, s.fan_out);
    let mut out = Vec::new();
    if let Some(slot) = s.x {
        let mut dx = vec![0.0f32; s.rows * s.fan_in];
        gemm(dy, MatRef::new(s.wv.data(), s.fan_in, s.fan_out).t(), &mut dx, false);
        out.push((slot, dx));
    }
    if let Some(slot) = s.w {
        let mut dw = vec![0.0f32; s.fan_in * s.fan_out];
        gemm(MatRef::new(s.xv.data(), s.rows, s.fan_in).t(), dy, &mut dw, false);
        out.push((slot, dw));
    }
    if let Some(slot) = s.bias {
        out.push((slot, sum_trailing(g, s.fan_out)));
    }
    out
}
