use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{dots_leq, join_dot_map, Lattice};
use crate::causality::{CausalContext, Dot, ReplicaId};
use crate::value::Value;

/// Multi-value register: a write replaces every value it has observed, so
/// concurrent writes survive side by side until a later write covers them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MvRegister {
    entries: BTreeMap<Dot, Value>,
    context: CausalContext,
}

impl MvRegister {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_dot(&self, replica: &ReplicaId) -> Dot {
        self.context.next_dot(replica)
    }

    pub fn write(&mut self, value: Value, dot: Dot) {
        self.entries.clear();
        self.context.insert(dot.clone());
        self.entries.insert(dot, value);
    }

    /// Values of all live entries, sorted; equal values written concurrently
    /// are kept once per entry.
    pub fn read(&self) -> Vec<Value> {
        let mut out: Vec<Value> = self.entries.values().cloned().collect();
        out.sort();
        out
    }

    pub fn entries(&self) -> &BTreeMap<Dot, Value> {
        &self.entries
    }

    pub fn context(&self) -> &CausalContext {
        &self.context
    }

    pub fn from_parts(entries: BTreeMap<Dot, Value>, context: CausalContext) -> Self {
        MvRegister { entries, context }
    }
}

impl Lattice for MvRegister {
    fn merge(&mut self, other: &Self) {
        self.entries = join_dot_map(&self.entries, &self.context, &other.entries, &other.context);
        self.context.join_assign(&other.context);
    }

    fn leq(&self, other: &Self) -> bool {
        dots_leq(|d| self.entries.contains_key(d), &self.context, other.entries.keys(), &other.context)
    }
}
