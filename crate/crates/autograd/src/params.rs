use std::rc::Rc;

use rand::Rng;

use crate::{Float, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    /// Non-trainable state saved with the model (batch-norm running statistics).
    Buffer,
}

#[derive(Clone, Debug)]
struct Entry<F> {
    name: String,
    kind: ParamKind,
    value: Rc<Tensor<F>>,
}

/// Named collection of model tensors.
///
/// Values are reference counted, so cloning a store is cheap and later
/// updates copy on write; a clone therefore works as a weight snapshot.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F> {
    entries: Vec<Entry<F>>,
}

impl<F: Float> ParamStore<F> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<F>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.entries.push(Entry { name, kind, value: Rc::new(value) });
        ParamId(self.entries.len() - 1)
    }

    pub fn trainable(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        self.add(name, ParamKind::Trainable, value)
    }

    pub fn buffer(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        self.add(name, ParamKind::Buffer, value)
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

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.entries[id.0].kind
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.kind(id) == ParamKind::Trainable
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.entries[id.0].value
    }

    pub(crate) fn shared(&self, id: ParamId) -> Rc<Tensor<F>> {
        self.entries[id.0].value.clone()
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        Rc::make_mut(&mut self.entries[id.0].value)
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<F>) {
        assert_eq!(value.shape(), self.get(id).shape(), "shape mismatch for {}", self.name(id));
        self.entries[id.0].value = Rc::new(value);
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.kind == ParamKind::Trainable).map(|e| e.value.numel()).sum()
    }

    pub fn apply_updates(&mut self, updates: Vec<(ParamId, Tensor<F>)>) {
        for (id, v) in updates {
            self.set(id, v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite())
    }

    /// Iterates `(name, kind, tensor)` in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, ParamKind, &Tensor<F>)> {
        self.entries.iter().map(|e| (e.name.as_str(), e.kind, &*e.value))
    }

    pub fn cast<G: Float>(&self) -> ParamStore<G> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry { name: e.name.clone(), kind: e.kind, value: Rc::new(e.value.cast()) })
                .collect(),
        }
    }
}

/// Uniform initialisation on `[-bound, bound]`.
pub fn uniform<F: Float, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<F> {
    Tensor::from_fn(shape, |_| F::of(rng.random_range(-bound..=bound)))
}

/// Fan-in scaled uniform initialisation, bound `1/sqrt(fan_in)`.
pub fn fan_in_uniform<F: Float, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<F> {
    uniform(shape, 1.0 / (fan_in.max(1) as f64).sqrt(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clone_is_a_snapshot() {
        let mut s = ParamStore::<f32>::new();
        let id = s.trainable("w", Tensor::zeros(&[3]));
        let snap = s.clone();
        s.get_mut(id).data_mut()[0] = 5.0;
        assert_eq!(snap.get(id).data()[0], 0.0);
        assert_eq!(s.get(id).data()[0], 5.0);
    }

    #[test]
    fn counts_only_trainable() {
        let mut s = ParamStore::<f32>::new();
        s.trainable("w", Tensor::zeros(&[3, 4]));
        s.buffer("running_mean", Tensor::zeros(&[4]));
        assert_eq!(s.num_trainable(), 12);
    }
}
