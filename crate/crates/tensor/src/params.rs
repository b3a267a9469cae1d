use std::cell::RefCell;

use crate::{Gradients, Graph, Scalar, Tensor, Var};

/// Index of a parameter or buffer inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    /// Trained by the optimizer.
    Param,
    /// State updated during the forward pass (batch-norm running stats).
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
struct Entry<T> {
    name: String,
    kind: EntryKind,
    value: Tensor<T>,
}

/// Named, ordered collection of model tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    fn push(&mut self, name: String, kind: EntryKind, value: Tensor<T>) -> ParamId {
        assert!(self.entries.iter().all(|e| e.name != name), "duplicate parameter name {name}");
        self.entries.push(Entry { name, kind, value });
        ParamId(self.entries.len() - 1)
    }

    pub fn add_param(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.push(name.into(), EntryKind::Param, value)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.push(name.into(), EntryKind::Buffer, value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> EntryKind {
        self.entries[id.0].kind
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.kind == EntryKind::Param).map(|e| e.value.numel()).sum()
    }

    /// `(name, kind, tensor)` for every entry, in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, EntryKind, &Tensor<T>)> {
        self.entries.iter().map(|e| (e.name.as_str(), e.kind, &e.value))
    }

    /// Converts every tensor to another element type, keeping layout and ids.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry { name: e.name.clone(), kind: e.kind, value: e.value.cast() })
                .collect(),
        }
    }

    /// Places the store's tensors on `graph` for one forward pass.
    pub fn bind<'a>(&'a self, graph: &'a Graph<T>, mode: Mode) -> Binding<'a, T> {
        let trainable = mode == Mode::Train;
        let vars = self
            .entries
            .iter()
            .map(|e| match e.kind {
                EntryKind::Param if trainable => Some(graph.variable(e.value.clone())),
                EntryKind::Param => Some(graph.constant(e.value.clone())),
                EntryKind::Buffer => None,
            })
            .collect();
        Binding { store: self, graph, vars, mode, updates: RefCell::new(Vec::new()) }
    }

    /// Commits buffer updates recorded by a [`Binding`].
    pub fn apply_updates(&mut self, updates: Vec<(ParamId, Tensor<T>)>) {
        for (id, t) in updates {
            assert_eq!(self.entries[id.0].kind, EntryKind::Buffer);
            self.entries[id.0].value = t;
        }
    }
}

/// How a model participates in a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Parameters receive gradients; normalization uses batch statistics and
    /// running statistics are updated.
    Train,
    /// Parameters are constants, but normalization still uses batch
    /// statistics (a frozen network inside another network's training step).
    Frozen,
    /// Parameters are constants; normalization uses running statistics.
    Eval,
}

/// A [`ParamStore`] bound to a [`Graph`].
pub struct Binding<'a, T> {
    store: &'a ParamStore<T>,
    graph: &'a Graph<T>,
    vars: Vec<Option<Var>>,
    mode: Mode,
    updates: RefCell<Vec<(ParamId, Tensor<T>)>>,
}

impl<'a, T: Scalar> Binding<'a, T> {
    pub fn graph(&self) -> &'a Graph<T> {
        self.graph
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0].expect("buffers have no graph variable")
    }

    pub fn buffer(&self, id: ParamId) -> &'a Tensor<T> {
        self.store.get(id)
    }

    pub fn record_update(&self, id: ParamId, value: Tensor<T>) {
        self.updates.borrow_mut().push((id, value));
    }

    pub fn take_updates(&self) -> Vec<(ParamId, Tensor<T>)> {
        std::mem::take(&mut self.updates.borrow_mut())
    }

    /// Gradients of every trainable parameter (zeros where unreached).
    pub fn param_grads(&self, grads: &Gradients<T>) -> Vec<(ParamId, Tensor<T>)> {
        self.store
            .ids()
            .filter(|&id| self.store.kind(id) == EntryKind::Param)
            .map(|id| {
                let g = self.vars[id.0]
                    .and_then(|v| grads.get(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(self.store.get(id).shape()));
                (id, g)
            })
            .collect()
    }
}
