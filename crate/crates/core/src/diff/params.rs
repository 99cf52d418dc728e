use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct ParamSlot<T: Real> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
    pub trainable: bool,
}

/// Named learnable tensors, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Real> {
    slots: Vec<ParamSlot<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            slots: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Panics on a duplicate name; names are fixed by the model layout.
    pub fn register(&mut self, name: impl Into<String>, value: Matrix<T>) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.slots.len());
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.slots.push(ParamSlot {
            name: name.clone(),
            value,
            grad,
            trainable: true,
        });
        self.by_name.insert(name, id);
        id
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn slot(&self, id: ParamId) -> &ParamSlot<T> {
        &self.slots[id.0]
    }

    pub fn slot_mut(&mut self, id: ParamId) -> &mut ParamSlot<T> {
        &mut self.slots[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Matrix<T> {
        &self.slots[id.0].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.slots[id.0].value
    }

    pub fn slots(&self) -> impl Iterator<Item = &ParamSlot<T>> {
        self.slots.iter()
    }

    pub fn slots_mut(&mut self) -> impl Iterator<Item = &mut ParamSlot<T>> {
        self.slots.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.slots {
            s.grad.fill(T::zero());
        }
    }

    /// Overwrites every slot's `grad` with `grads` (zero where absent).
    pub fn set_grads(&mut self, grads: &Gradients<T>) {
        self.zero_grads();
        for (slot, g) in self.slots.iter_mut().zip(&grads.grads) {
            if let Some(g) = g {
                slot.grad.add_assign(g);
            }
        }
    }

    /// Replaces values with another store of identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.slots.len() != self.slots.len() {
            return Err(Error::shape("copy_values_from", self.slots.len(), other.slots.len()));
        }
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::shape(
                    "copy_values_from",
                    format!("{} {:?}", a.name, a.value.shape()),
                    format!("{} {:?}", b.name, b.value.shape()),
                ));
            }
            a.value = b.value.clone();
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            slots: self
                .slots
                .iter()
                .map(|s| ParamSlot {
                    name: s.name.clone(),
                    value: s.value.cast(),
                    grad: s.grad.cast(),
                    trainable: s.trainable,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Sparse-by-parameter gradient accumulator. Slots are allocated on first
/// write so per-worker accumulators stay small for untouched parameters.
#[derive(Clone, Debug)]
pub struct Gradients<T: Real> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn for_store(store: &ParamStore<T>) -> Self {
        Gradients {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Mutable slot for `id`, zero-initialized with `shape` on first use.
    pub fn slot_mut(&mut self, id: ParamId, shape: (usize, usize)) -> &mut Matrix<T> {
        self.grads[id.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
    }

    /// `self += other`. Callers fix the merge order for reproducibility.
    pub fn merge(&mut self, other: &Gradients<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in self.grads.iter_mut().flatten() {
            g.scale(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }

    /// Dense value for `id`, zeros when never written.
    pub fn dense(&self, store: &ParamStore<T>, id: ParamId) -> Matrix<T> {
        match self.get(id) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = store.value(id).shape();
                Matrix::zeros(r, c)
            }
        }
    }
}
