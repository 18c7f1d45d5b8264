use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

const SQRT_2_OVER_PI: f32 = 0.797_884_6;
const GELU_C: f32 = 0.044_715;

pub(crate) fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f32) -> f32 {
    let inner = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let t = inner.tanh();
    let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

pub(crate) fn mul_vec(a: &[f32], b: &[f32]) -> Vec<f32> {
    a.iter().zip(b).map(|(a, b)| a * b).collect()
}

pub(crate) fn mul_trailing_vec(x: &[f32], y: &[f32]) -> Vec<f32> {
    x.chunks(y.len()).flat_map(|row| row.iter().zip(y).map(|(a, b)| a * b)).collect()
}

pub(crate) fn sum_trailing(g: &[f32], len: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; len];
    for row in g.chunks(len) {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += *v as f64);
    }
    acc.into_iter().map(|v| v as f32).collect()
}

pub(crate) fn sum_trailing_product(g: &[f32], x: &[f32], len: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; len];
    for (grow, xrow) in g.chunks(len).zip(x.chunks(len)) {
        for ((a, gv), xv) in acc.iter_mut().zip(grow).zip(xrow) {
            *a += (*gv as f64) * (*xv as f64);
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}

fn same_shape(op: &'static str, a: &Var, b: &Var) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn trailing_len(op: &'static str, x: &Var, y: &Var) -> Result<usize> {
    let (xs, ys) = (x.shape(), y.shape());
    if ys.len() > xs.len() || xs[xs.len() - ys.len()..] != *ys {
        return Err(shape_err(op, format!("{ys:?} is not a trailing block of {xs:?}")));
    }
    Ok(y.value().numel())
}

impl Graph {
    pub fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("add", a, b)?;
        let (sa, sb) = (self.slot(a)?, self.slot(b)?);
        let data = a.value().data().iter().zip(b.value().data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_parts(a.shape().to_vec(), data);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sa, sb], value, || Op::Add(sa, sb)))
    }

    pub fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("sub", a, b)?;
        let (sa, sb) = (self.slot(a)?, self.slot(b)?);
        let data = a.value().data().iter().zip(b.value().data()).map(|(x, y)| x - y).collect();
        let value = Tensor::from_parts(a.shape().to_vec(), data);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sa, sb], value, || Op::Sub(sa, sb)))
    }

    pub fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("mul", a, b)?;
        let (sa, sb) = (self.slot(a)?, self.slot(b)?);
        let value = Tensor::from_parts(a.shape().to_vec(), mul_vec(a.value().data(), b.value().data()));
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sa, sb], value, || Op::Mul { a: sa, b: sb, av: a.value().clone(), bv: b.value().clone() }))
    }

    /// `x + y` where `y` matches the trailing dimensions of `x`.
    pub fn add_trailing(&mut self, x: &Var, y: &Var) -> Result<Var> {
        let y_len = trailing_len("add_trailing", x, y)?;
        let (sx, sy) = (self.slot(x)?, self.slot(y)?);
        let yd = y.value().data();
        let data = if y_len == 0 {
            Vec::new()
        } else {
            x.value().data().chunks(y_len).flat_map(|row| row.iter().zip(yd).map(|(a, b)| a + b)).collect()
        };
        let value = Tensor::from_parts(x.shape().to_vec(), data);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sx, sy], value, || Op::AddTrailing { x: sx, y: sy, y_len }))
    }

    /// `x * y` where `y` matches the trailing dimensions of `x`.
    pub fn mul_trailing(&mut self, x: &Var, y: &Var) -> Result<Var> {
        let y_len = trailing_len("mul_trailing", x, y)?;
        let (sx, sy) = (self.slot(x)?, self.slot(y)?);
        let data = if y_len == 0 { Vec::new() } else { mul_trailing_vec(x.value().data(), y.value().data()) };
        let value = Tensor::from_parts(x.shape().to_vec(), data);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sx, sy], value, || Op::MulTrailing {
            x: sx,
            y: sy,
            xv: x.value().clone(),
            yv: y.value().clone(),
        }))
    }

    pub fn scale(&mut self, x: &Var, s: f32) -> Result<Var> {
        let sx = self.slot(x)?;
        let value = x.value().map(|v| v * s);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sx], value, || Op::Scale { x: sx, s }))
    }

    pub fn relu(&mut self, x: &Var) -> Result<Var> {
        let sx = self.slot(x)?;
        let value = x.value().map(|v| v.max(0.0));
        self.add_cost(0, value.numel());
        let out = value.clone();
        Ok(self.emit(&[sx], value, || Op::Relu { x: sx, out }))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: &Var) -> Result<Var> {
        let sx = self.slot(x)?;
        let value = x.value().map(gelu);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sx], value, || Op::Gelu { x: sx, xv: x.value().clone() }))
    }

    pub fn abs(&mut self, x: &Var) -> Result<Var> {
        let sx = self.slot(x)?;
        let value = x.value().map(f32::abs);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sx], value, || Op::Abs { x: sx, xv: x.value().clone() }))
    }

    /// Elementwise `1 / x`.
    pub fn recip(&mut self, x: &Var) -> Result<Var> {
        let sx = self.slot(x)?;
        let value = x.value().map(|v| 1.0 / v);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sx], value.clone(), || Op::Recip { x: sx, out: value }))
    }

    pub fn square(&mut self, x: &Var) -> Result<Var> {
        let sx = self.slot(x)?;
        let value = x.value().map(|v| v * v);
        self.add_cost(0, value.numel());
        Ok(self.emit(&[sx], value, || Op::Square { x: sx, xv: x.value().clone() }))
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum_all(&mut self, x: &Var) -> Result<Var> {
        self.reduce_all(x, false)
    }

    /// Mean of every element, as a rank-0 tensor.
    pub fn mean_all(&mut self, x: &Var) -> Result<Var> {
        if x.value().numel() == 0 {
            return Err(shape_err("mean_all", "empty input"));
        }
        self.reduce_all(x, true)
    }

    fn reduce_all(&mut self, x: &Var, mean: bool) -> Result<Var> {
        let sx = self.slot(x)?;
        let n = x.value().numel();
        let sum: f64 = x.value().data().iter().map(|&v| v as f64).sum();
        let v = if mean { sum / n as f64 } else { sum };
        self.add_cost(0, n);
        Ok(self.emit(&[sx], Tensor::scalar(v as f32), || Op::SumAll { x: sx, n, mean }))
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&mut self, x: &Var, axis: usize) -> Result<Var> {
        let shape = x.shape();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(shape_err("mean_axis", format!("axis {axis} of {shape:?}")));
        }
        let sx = self.slot(x)?;
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = x.value().data();
        let mut out = vec![0.0f32; outer * inner];
        let mut acc = vec![0.0f64; inner];
        for o in 0..outer {
            acc.fill(0.0);
            for l in 0..len {
                let row = &xd[(o * len + l) * inner..(o * len + l + 1) * inner];
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += *v as f64);
            }
            for (dst, a) in out[o * inner..(o + 1) * inner].iter_mut().zip(&acc) {
                *dst = (*a / len as f64) as f32;
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        self.add_cost(0, xd.len());
        let value = Tensor::from_parts(out_shape, out);
        Ok(self.emit(&[sx], value, || Op::MeanAxis { x: sx, outer, len, inner }))
    }
}
