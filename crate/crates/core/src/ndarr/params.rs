use serde::{Deserialize, Serialize};

use super::{Array, Graph, Var};

/// Which part of the model a parameter belongs to. Training freezes groups
/// independently.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Backbone,
    Intensity,
    Heads,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub value: Array,
}

/// Flat, ordered store of named parameter arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, group: ParamGroup, value: Array) -> ParamId {
        self.entries.push(ParamEntry {
            name: name.into(),
            group,
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.entries[id.0].value
    }

    pub fn value_at(&self, index: usize) -> &Array {
        &self.entries[index].value
    }

    pub fn value_at_mut(&mut self, index: usize) -> &mut Array {
        &mut self.entries[index].value
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Places every parameter on `graph`. Parameters whose group is not
    /// accepted by `trainable` become constants.
    pub fn bind(&self, graph: &Graph, trainable: impl Fn(ParamGroup) -> bool) -> Binding {
        let vars = self
            .entries
            .iter()
            .map(|e| {
                if trainable(e.group) {
                    graph.param(e.value.clone())
                } else {
                    graph.constant(e.value.clone())
                }
            })
            .collect();
        Binding { vars }
    }

    pub fn bind_all(&self, graph: &Graph) -> Binding {
        self.bind(graph, |_| true)
    }
}

/// Graph handles for a [`ParamSet`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients aligned with the parameter order; `None` for constants.
    pub fn grads(&self, graph: &Graph) -> Vec<Option<Array>> {
        self.vars.iter().map(|&v| graph.grad(v)).collect()
    }
}
