use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Handle to one named entry of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Learnable parameters receive gradients and count towards model size;
/// buffers (running statistics) are state that is only checkpointed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Trainable,
    Buffer,
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    value: Tensor,
    grad: Option<Vec<f32>>,
    kind: ParamKind,
}

/// Named tensors owned by a model, together with their gradient buffers.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, kind: ParamKind) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id);
        self.entries.push(Entry { name, value, grad: None, kind });
        Ok(id)
    }

    pub fn trainable(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, ParamKind::Trainable)
    }

    pub fn buffer(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, ParamKind::Buffer)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.entries[id.0].kind
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    /// Replaces a value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(TensorError::Shape {
                op: "set_value",
                detail: format!("`{}` has shape {:?}, got {:?}", entry.name, entry.value.shape(), value.shape()),
            });
        }
        entry.value = value;
        Ok(())
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f32] {
        self.entries[id.0].value.data_mut()
    }

    /// Mutable value alongside the accumulated gradient, for optimizers.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut [f32], Option<&[f32]>) {
        let entry = &mut self.entries[id.0];
        (entry.value.data_mut(), entry.grad.as_deref())
    }

    pub fn grad(&self, id: ParamId) -> Option<&[f32]> {
        self.entries[id.0].grad.as_deref()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[f32]) {
        let entry = &mut self.entries[id.0];
        debug_assert_eq!(grad.len(), entry.value.numel());
        match &mut entry.grad {
            Some(acc) => acc.iter_mut().zip(grad).for_each(|(a, g)| *a += g),
            None => entry.grad = Some(grad.to_vec()),
        }
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad = None;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|&id| self.entries[id.0].kind == ParamKind::Trainable)
    }

    /// Number of learnable scalars.
    pub fn num_trainable_scalars(&self) -> usize {
        self.entries.iter().filter(|e| e.kind == ParamKind::Trainable).map(|e| e.value.numel()).sum()
    }

    /// Cheap copy of every value (storage is shared until written).
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }

    pub fn restore(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.entries.len() {
            return Err(TensorError::Invalid(format!(
                "snapshot holds {} tensors, store has {}",
                values.len(),
                self.entries.len()
            )));
        }
        for (i, v) in values.into_iter().enumerate() {
            self.set_value(ParamId(i), v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_only_trainable() {
        let mut ps = ParamStore::new();
        ps.trainable("w", Tensor::zeros([3, 4])).unwrap();
        ps.buffer("running_mean", Tensor::zeros([4])).unwrap();
        assert_eq!(ps.num_trainable_scalars(), 12);
        assert!(ps.trainable("w", Tensor::zeros([1])).is_err());
    }

    #[test]
    fn gradients_accumulate_until_cleared() {
        let mut ps = ParamStore::new();
        let id = ps.trainable("w", Tensor::zeros([2])).unwrap();
        ps.accumulate_grad(id, &[1.0, 2.0]);
        ps.accumulate_grad(id, &[1.0, 2.0]);
        assert_eq!(ps.grad(id).unwrap(), &[2.0, 4.0]);
        ps.zero_grad();
        assert!(ps.grad(id).is_none());
    }
}
