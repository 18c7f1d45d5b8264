use crate::conv::{col2im, im2col, ConvGeometry};
use crate::error::{shape_err, Result};
use crate::gemm::{gemm, MatRef};
use crate::graph::{Graph, Op, Slot, Var};
use crate::par;
use crate::tensor::Tensor;

pub(crate) struct ConvSaved {
    x: Slot,
    w: Slot,
    bias: Slot,
    xv: Tensor,
    wv: Tensor,
    batch: usize,
    in_c: usize,
    out_c: usize,
    groups: usize,
    geom: ConvGeometry,
}

/// Convolution hyper-parameters besides the kernel shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self { stride: 1, padding: 0, groups: 1 }
    }
}

impl Graph {
    /// 2-D cross-correlation of `x: [B, C, H, W]` with `w: [O, C/groups, kh, kw]`.
    pub fn conv2d(&mut self, x: &Var, w: &Var, bias: Option<&Var>, spec: Conv2dSpec) -> Result<Var> {
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 4 || ws.len() != 4 {
            return Err(shape_err("conv2d", format!("input {xs:?}, weight {ws:?}")));
        }
        let (batch, in_c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (out_c, cg, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        let groups = spec.groups;
        if groups == 0 || in_c % groups != 0 || out_c % groups != 0 || cg != in_c / groups {
            return Err(shape_err(
                "conv2d",
                format!("{in_c} input and {out_c} output channels with {groups} groups, weight {ws:?}"),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [out_c] {
                return Err(shape_err("conv2d", format!("bias {:?}", b.shape())));
            }
        }
        let geom = ConvGeometry::new(h, wd, kh, kw, spec.stride, spec.padding)?;
        let (sx, sw) = (self.slot(x)?, self.slot(w)?);
        let sb = match bias {
            Some(b) => self.slot(b)?,
            None => None,
        };
        let opix = geom.out_pixels();
        let og = out_c / groups;
        let krows = cg * geom.kernel_area();
        let plane = h * wd;
        let xd = x.value().data();
        let wdat = w.value().data();
        let bd = bias.map(|b| b.value().data());
        let mut out = vec![0.0f32; batch * out_c * opix];
        par::for_each_chunk_mut(&mut out, (out_c * opix).max(1), |i, img_out| {
            let img = &xd[i * in_c * plane..(i + 1) * in_c * plane];
            let mut cols = vec![0.0f32; krows * opix];
            for gi in 0..groups {
                im2col(&img[gi * cg * plane..(gi + 1) * cg * plane], cg, &geom, &mut cols);
                gemm(
                    MatRef::new(&wdat[gi * og * krows..], og, krows),
                    MatRef::new(&cols, krows, opix),
                    &mut img_out[gi * og * opix..(gi + 1) * og * opix],
                    false,
                );
            }
            if let Some(bd) = bd {
                for (o, row) in img_out.chunks_mut(opix.max(1)).enumerate() {
                    row.iter_mut().for_each(|v| *v += bd[o]);
                }
            }
        });
        self.add_cost(batch * out_c * opix * krows, if bias.is_some() { batch * out_c * opix } else { 0 });
        let value = Tensor::from_parts(vec![batch, out_c, geom.out_h, geom.out_w], out);
        Ok(self.emit(&[sx, sw, sb], value, || {
            Op::Conv2d(ConvSaved {
                x: sx,
                w: sw,
                bias: sb,
                xv: x.value().clone(),
                wv: w.value().clone(),
                batch,
                in_c,
                out_c,
                groups,
                geom,
            })
        }))
    }

    /// Max pooling over `[B, C, H, W]` with a square window.
    pub fn max_pool2d(&mut self, x: &Var, kernel: usize, stride: usize, padding: usize) -> Result<Var> {
        let xs = x.shape();
        if xs.len() != 4 {
            return Err(shape_err("max_pool2d", format!("input {xs:?}")));
        }
        if padding > kernel / 2 {
            return Err(shape_err("max_pool2d", "padding must be smaller than half the window"));
        }
        let geom = ConvGeometry::new(xs[2], xs[3], kernel, kernel, stride, padding)?;
        let sx = self.slot(x)?;
        let planes = xs[0] * xs[1];
        let plane = xs[2] * xs[3];
        let opix = geom.out_pixels();
        let xd = x.value().data();
        let mut out = vec![0.0f32; planes * opix];
        let mut argmax = vec![0u32; planes * opix];
        for p in 0..planes {
            let src = &xd[p * plane..(p + 1) * plane];
            for oy in 0..geom.out_h {
                for ox in 0..geom.out_w {
                    let mut best = f32::NEG_INFINITY;
                    let mut at = usize::MAX;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let y = (oy * stride + ky) as isize - padding as isize;
                            let xx = (ox * stride + kx) as isize - padding as isize;
                            if y < 0 || xx < 0 || y >= xs[2] as isize || xx >= xs[3] as isize {
                                continue;
                            }
                            let idx = y as usize * xs[3] + xx as usize;
                            if at == usize::MAX || src[idx] > best {
                                best = src[idx];
                                at = idx;
                            }
                        }
                    }
                    let o = p * opix + oy * geom.out_w + ox;
                    out[o] = best;
                    argmax[o] = (p * plane + at) as u32;
                }
            }
        }
        self.add_cost(0, planes * opix * kernel * kernel);
        let value = Tensor::from_parts(vec![xs[0], xs[1], geom.out_h, geom.out_w], out);
        let in_len = xd.len();
        Ok(self.emit(&[sx], value, || Op::MaxPool { x: sx, argmax, in_len }))
    }
}

pub(crate) fn conv2d_backward(s: &ConvSaved, g: &[f32]) -> Vec<(usize, Vec<f32>)> {
    let geom = &s.geom;
    let opix = geom.out_pixels();
    let cg = s.in_c / s.groups;
    let og = s.out_c / s.groups;
    let krows = cg * geom.kernel_area();
    let plane = geom.in_h * geom.in_w;
    let wd = s.wv.data();
    let xd = s.xv.data();
    let mut out = Vec::new();
    if let Some(slot) = s.x {
        let mut dx = vec![0.0f32; s.batch * s.in_c * plane];
        par::for_each_chunk_mut(&mut dx, (s.in_c * plane).max(1), |i, dimg| {
            let gout = &g[i * s.out_c * opix..(i + 1) * s.out_c * opix];
            let mut dcols = vec![0.0f32; krows * opix];
            for gi in 0..s.groups {
                gemm(
                    MatRef::new(&wd[gi * og * krows..], og, krows).t(),
                    MatRef::new(&gout[gi * og * opix..], og, opix),
                    &mut dcols,
                    false,
                );
                col2im(&dcols, cg, geom, &mut dimg[gi * cg * plane..(gi + 1) * cg * plane]);
            }
        });
        out.push((slot, dx));
    }
    if let Some(slot) = s.w {
        let mut dw = vec![0.0f32; s.out_c * krows];
        let mut cols = vec![0.0f32; krows * opix];
        for i in 0..s.batch {
            let img = &xd[i * s.in_c * plane..(i + 1) * s.in_c * plane];
            let gout = &g[i * s.out_c * opix..(i + 1) * s.out_c * opix];
            for gi in 0..s.groups {
                im2col(&img[gi * cg * plane..(gi + 1) * cg * plane], cg, geom, &mut cols);
                gemm(
                    MatRef::new(&gout[gi * og * opix..], og, opix),
                    MatRef::new(&cols, krows, opix).t(),
                    &mut dw[gi * og * krows..(gi + 1) * og * krows],
                    i > 0,
                );
            }
        }
        out.push((slot, dw));
    }
    if let Some(slot) = s.bias {
        let mut db = vec![0.0f64; s.out_c];
        for i in 0..s.batch {
            for (o, acc) in db.iter_mut().enumerate() {
                let row = &g[(i * s.out_c + o) * opix..(i * s.out_c + o + 1) * opix];
                *acc += row.iter().map(|&v| v as f64).sum::<f64>();
            }
        }
        out.push((slot, db.into_iter().map(|v| v as f32).collect()));
    }
    out
}
