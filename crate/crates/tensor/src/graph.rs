//! The differentiation tape.
//!
//! A [`Graph`] records one forward pass. Every operation that touches a
//! tracked input appends a node; because nodes are appended in execution
//! order the tape is already topologically sorted, and [`Graph::backward`]
//! walks it once in reverse. Inputs that do not require gradients never
//! enter the tape, and in inference mode nothing is recorded at all, so
//! intermediate values are freed as soon as their [`Var`] handles drop.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::flops::FlopCount;
use crate::ops;
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;

static NEXT_GRAPH: AtomicU64 = AtomicU64::new(1);

/// A value produced inside a [`Graph`], possibly linked to a tape node.
#[derive(Clone, Debug)]
pub struct Var {
    node: Option<(u64, usize)>,
    value: Tensor,
}

impl Var {
    /// A value that never receives gradients.
    pub fn constant(value: Tensor) -> Self {
        Self { node: None, value }
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn into_value(self) -> Tensor {
        self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }
}

/// Tape position of a parent, `None` when the parent needs no gradient.
pub(crate) type Slot = Option<usize>;

/// Backward rule of a user-defined operation: receives the input values,
/// the output value and the output gradient, returns one optional gradient
/// per input.
pub type CustomRule = Box<dyn Fn(&[Tensor], &Tensor, &Tensor) -> Vec<Option<Tensor>> + Send + Sync>;

pub(crate) enum Op {
    Param(ParamId),
    Add(Slot, Slot),
    Sub(Slot, Slot),
    Mul { a: Slot, b: Slot, av: Tensor, bv: Tensor },
    AddTrailing { x: Slot, y: Slot, y_len: usize },
    MulTrailing { x: Slot, y: Slot, xv: Tensor, yv: Tensor },
    Scale { x: Slot, s: f32 },
    Relu { x: Slot, out: Tensor },
    Gelu { x: Slot, xv: Tensor },
    Abs { x: Slot, xv: Tensor },
    Square { x: Slot, xv: Tensor },
    Recip { x: Slot, out: Tensor },
    MatMul(ops::linalg::MatMulSaved),
    Linear(ops::linalg::LinearSaved),
    Conv2d(ops::conv::ConvSaved),
    MaxPool { x: Slot, argmax: Vec<u32>, in_len: usize },
    MeanAxis { x: Slot, outer: usize, len: usize, inner: usize },
    SumAll { x: Slot, n: usize, mean: bool },
    Softmax { x: Slot, out: Tensor },
    LayerNorm(ops::norm::LayerNormSaved),
    BatchNorm(ops::norm::BatchNormSaved),
    L2Normalize { x: Slot, out: Tensor, norms: Vec<f32>, eps: f32 },
    Reshape { x: Slot },
    Permute { x: Slot, in_shape: Vec<usize>, axes: Vec<usize> },
    Concat { xs: Vec<Slot>, outer: usize, lens: Vec<usize>, inner: usize },
    Narrow { x: Slot, outer: usize, full: usize, start: usize, len: usize, inner: usize },
    BroadcastBatch { x: Slot, copies: usize },
    Custom { parents: Vec<Slot>, inputs: Vec<Tensor>, output: Tensor, rule: CustomRule },
}

pub(crate) struct Node {
    op: Op,
    numel: usize,
}

/// One forward pass worth of recorded operations.
pub struct Graph {
    uid: u64,
    nodes: Vec<Node>,
    record: bool,
    training: bool,
    cost: FlopCount,
    buffer_updates: Vec<(ParamId, Tensor)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// Recording graph in training mode.
    pub fn new() -> Self {
        Self::with_mode(true, true)
    }

    /// Non-recording graph in evaluation mode.
    pub fn inference() -> Self {
        Self::with_mode(false, false)
    }

    pub fn with_mode(record: bool, training: bool) -> Self {
        Self {
            uid: NEXT_GRAPH.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            record,
            training,
            cost: FlopCount::default(),
            buffer_updates: Vec::new(),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Switches normalization layers between batch and running statistics.
    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    /// Number of tape nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operations executed so far.
    pub fn cost(&self) -> FlopCount {
        self.cost
    }

    /// Running-statistic updates produced by training-mode normalization.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    /// Writes pending buffer updates into `store`.
    pub fn commit_buffers(&mut self, store: &mut ParamStore) -> Result<()> {
        for (id, value) in self.take_buffer_updates() {
            store.set_value(id, value)?;
        }
        Ok(())
    }

    /// Brings a stored tensor into the graph. Trainable entries are tracked
    /// when recording; buffers are always constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        if self.record && store.kind(id) == ParamKind::Trainable {
            self.push(Op::Param(id), value)
        } else {
            Var::constant(value)
        }
    }

    pub fn constant(&self, value: Tensor) -> Var {
        Var::constant(value)
    }

    pub(crate) fn slot(&self, v: &Var) -> Result<Slot> {
        match v.node {
            None => Ok(None),
            Some((uid, idx)) if uid == self.uid => Ok(Some(idx)),
            Some(_) => Err(TensorError::ForeignVariable),
        }
    }

    pub(crate) fn push(&mut self, op: Op, value: Tensor) -> Var {
        let idx = self.nodes.len();
        self.nodes.push(Node { op, numel: value.numel() });
        Var { node: Some((self.uid, idx)), value }
    }

    /// Records `op` when recording and any parent is tracked, otherwise
    /// returns an untracked value. `op` is built lazily so saved tensors are
    /// only cloned when needed.
    pub(crate) fn emit(&mut self, slots: &[Slot], value: Tensor, op: impl FnOnce() -> Op) -> Var {
        if self.record && slots.iter().any(Option::is_some) {
            self.push(op(), value)
        } else {
            Var::constant(value)
        }
    }

    pub(crate) fn add_cost(&mut self, macs: usize, elementwise: usize) {
        self.cost += FlopCount::new(macs as u64, elementwise as u64);
    }

    pub(crate) fn push_buffer_update(&mut self, id: ParamId, value: Tensor) {
        self.buffer_updates.push((id, value));
    }

    /// Registers an operation whose forward value was computed by the caller.
    pub fn custom(
        &mut self,
        inputs: &[&Var],
        output: Tensor,
        rule: impl Fn(&[Tensor], &Tensor, &Tensor) -> Vec<Option<Tensor>> + Send + Sync + 'static,
    ) -> Result<Var> {
        let parents = inputs.iter().map(|v| self.slot(v)).collect::<Result<Vec<_>>>()?;
        let values: Vec<Tensor> = inputs.iter().map(|v| v.value().clone()).collect();
        let out = output.clone();
        Ok(self.emit(&parents.clone(), output, move || Op::Custom {
            parents,
            inputs: values,
            output: out,
            rule: Box::new(rule),
        }))
    }

    /// Accumulates d`loss`/dθ into `store` for every trainable parameter that
    /// contributed to `loss`. Calling it twice adds the gradients twice.
    pub fn backward(&self, loss: &Var, store: &mut ParamStore) -> Result<()> {
        if loss.value().numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss.shape().to_vec()));
        }
        let Some(root) = self.slot(loss)? else {
            return Ok(());
        };
        let mut grads: Vec<Option<Vec<f32>>> = Vec::new();
        grads.resize_with(root + 1, || None);
        grads[root] = Some(vec![1.0]);
        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            debug_assert_eq!(g.len(), node.numel);
            if let Op::Param(id) = node.op {
                store.accumulate_grad(id, &g);
                continue;
            }
            for (slot, pg) in backward_op(&node.op, g)? {
                match &mut grads[slot] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    empty => *empty = Some(pg),
                }
            }
        }
        Ok(())
    }
}

/// Gradients for the tracked parents of one node.
fn backward_op(op: &Op, g: Vec<f32>) -> Result<Vec<(usize, Vec<f32>)>> {
    use ops::{conv, elementwise as ew, linalg, norm, shape};
    let mut out = Vec::with_capacity(2);
    let mut put = |slot: &Slot, grad: Vec<f32>| {
        if let Some(s) = slot {
            out.push((*s, grad));
        }
    };
    match op {
        Op::Param(_) => unreachable!("handled by the caller"),
        Op::Add(a, b) => {
            if b.is_some() {
                put(b, g.clone());
            }
            put(a, g);
        }
        Op::Sub(a, b) => {
            if b.is_some() {
                put(b, g.iter().map(|v| -v).collect());
            }
            put(a, g);
        }
        Op::Mul { a, b, av, bv } => {
            if a.is_some() {
                put(a, ew::mul_vec(&g, bv.data()));
            }
            if b.is_some() {
                put(b, ew::mul_vec(&g, av.data()));
            }
        }
        Op::AddTrailing { x, y, y_len } => {
            if y.is_some() {
                put(y, ew::sum_trailing(&g, *y_len));
            }
            put(x, g);
        }
        Op::MulTrailing { x, y, xv, yv } => {
            if y.is_some() {
                put(y, ew::sum_trailing_product(&g, xv.data(), yv.numel()));
            }
            if x.is_some() {
                put(x, ew::mul_trailing_vec(&g, yv.data()));
            }
        }
        Op::Scale { x, s } => put(x, g.iter().map(|v| v * s).collect()),
        Op::Relu { x, out } => put(x, g.iter().zip(out.data()).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect()),
        Op::Gelu { x, xv } => put(x, g.iter().zip(xv.data()).map(|(g, x)| g * ew::gelu_grad(*x)).collect()),
        Op::Abs { x, xv } => put(
            x,
            g.iter()
                .zip(xv.data())
                .map(|(g, x)| {
                    if *x > 0.0 {
                        *g
                    } else if *x < 0.0 {
                        -*g
                    } else {
                        0.0
                    }
                })
                .collect(),
        ),
        Op::Recip { x, out } => put(x, g.iter().zip(out.data()).map(|(g, y)| -g * y * y).collect()),
        Op::Square { x, xv } => put(x, g.iter().zip(xv.data()).map(|(g, x)| 2.0 * g * x).collect()),
        Op::MatMul(saved) => {
            for (slot, grad) in linalg::matmul_backward(saved, &g) {
                put(&Some(slot), grad);
            }
        }
        Op::Linear(saved) => {
            for (slot, grad) in linalg::linear_backward(saved, &g) {
                put(&Some(slot), grad);
            }
        }
        Op::Conv2d(saved) => {
            for (slot, grad) in conv::conv2d_backward(saved, &g) {
                put(&Some(slot), grad);
            }
        }
        Op::MaxPool { x, argmax, in_len } => {
            let mut dx = vec![0.0; *in_len];
            for (gv, &src) in g.iter().zip(argmax) {
                dx[src as usize] += gv;
            }
            put(x, dx);
        }
        Op::MeanAxis { x, outer, len, inner } => {
            let scale = 1.0 / *len as f32;
            let mut dx = vec![0.0; outer * len * inner];
            for o in 0..*outer {
                for l in 0..*len {
                    let dst = &mut dx[(o * len + l) * inner..(o * len + l + 1) * inner];
                    let src = &g[o * inner..(o + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d = s * scale);
                }
            }
            put(x, dx);
        }
        Op::SumAll { x, n, mean } => {
            let v = if *mean { g[0] / *n as f32 } else { g[0] };
            put(x, vec![v; *n]);
        }
        Op::Softmax { x, out } => put(x, norm::softmax_backward(out, &g)),
        Op::LayerNorm(saved) => {
            for (slot, grad) in norm::layer_norm_backward(saved, &g) {
                put(&Some(slot), grad);
            }
        }
        Op::BatchNorm(saved) => {
            for (slot, grad) in norm::batch_norm_backward(saved, &g) {
                put(&Some(slot), grad);
            }
        }
        Op::L2Normalize { x, out, norms, eps } => put(x, norm::l2_normalize_backward(out, norms, *eps, &g)),
        Op::Reshape { x } => put(x, g),
        Op::Permute { x, in_shape, axes } => {
            let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
            let inverse = shape::inverse_axes(axes);
            put(x, shape::permute_data(&g, &out_shape, &inverse));
        }
        Op::Concat { xs, outer, lens, inner } => {
            let total: usize = lens.iter().sum();
            let mut offset = 0;
            for (slot, &len) in xs.iter().zip(lens) {
                if slot.is_some() {
                    put(slot, shape::narrow_data(&g, *outer, total, offset, len, *inner));
                }
                offset += len;
            }
        }
        Op::Narrow { x, outer, full, start, len, inner } => {
            let mut dx = vec![0.0; outer * full * inner];
            for o in 0..*outer {
                let src = &g[o * len * inner..(o + 1) * len * inner];
                let at = (o * full + start) * inner;
                dx[at..at + len * inner].copy_from_slice(src);
            }
            put(x, dx);
        }
        Op::BroadcastBatch { x, copies } => {
            let n = g.len() / copies;
            let mut dx = vec![0.0f32; n];
            for c in 0..*copies {
                dx.iter_mut().zip(&g[c * n..(c + 1) * n]).for_each(|(d, s)| *d += s);
            }
            put(x, dx);
        }
        Op::Custom { parents, inputs, output, rule } => {
            let grad = Tensor::from_vec(output.shape().to_vec(), g)?;
            let grads = rule(inputs, output, &grad);
            if grads.len() != parents.len() {
                return Err(TensorError::Invalid(format!(
                    "custom rule returned {} gradients for {} inputs",
                    grads.len(),
                    parents.len()
                )));
            }
            for ((slot, input), grad) in parents.iter().zip(inputs).zip(grads) {
                if let (Some(_), Some(grad)) = (slot, grad) {
                    if grad.shape() != input.shape() {
                        return Err(TensorError::Invalid("custom rule gradient shape differs from its input".into()));
                    }
                    put(slot, grad.into_vec());
                }
            }
        }
    }
    Ok(out)
}
