use std::collections::BTreeMap;
use std::sync::Arc;

use super::{DirectSolve, PropagationConfig, PropagationResult, SequentialSweep, SynchronousSweep};
use crate::error::{Error, Result};
use crate::simgraph::AssociationGraph;

/// A way of solving for the propagated state of a graph.
pub trait Propagator: Send + Sync {
    fn name(&self) -> &'static str;

    fn propagate(&self, g: &AssociationGraph, cfg: &PropagationConfig) -> Result<PropagationResult>;
}

/// Propagators by name.
#[derive(Clone, Default)]
pub struct PropagatorRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Propagator>>,
}

impl PropagatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `sequential`, `synchronous` and `direct`.
    pub fn with_defaults() -> Self {
        let mut reg = Self::new();
        reg.register(Arc::new(SequentialSweep));
        reg.register(Arc::new(SynchronousSweep));
        reg.register(Arc::new(DirectSolve));
        reg
    }

    /// Adds or replaces the propagator under its own name.
    pub fn register(&mut self, p: Arc<dyn Propagator>) {
        self.entries.insert(p.name(), p);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Propagator>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownSchedule(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

impl std::fmt::Debug for PropagatorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}
