use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{dots_leq, join_dot_set, Lattice};
use crate::causality::{CausalContext, Dot, ReplicaId};
use crate::value::Value;

/// Add-wins (observed-remove) set. Each add contributes a dot; a remove
/// deletes only the dots it has observed, so a concurrent add survives.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwSet {
    entries: BTreeMap<Value, BTreeSet<Dot>>,
    context: CausalContext,
}

impl AwSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_dot(&self, replica: &ReplicaId) -> Dot {
        self.context.next_dot(replica)
    }

    pub fn add(&mut self, elem: Value, dot: Dot) {
        self.context.insert(dot.clone());
        self.entries.entry(elem).or_default().insert(dot);
    }

    /// Removes every locally visible entry of `elem`; a no-op when there is none.
    /// Returns the removed dots.
    pub fn rmv(&mut self, elem: &Value) -> BTreeSet<Dot> {
        self.entries.remove(elem).unwrap_or_default()
    }

    pub fn contains(&self, elem: &Value) -> bool {
        self.entries.contains_key(elem)
    }

    pub fn elements(&self) -> BTreeSet<Value> {
        self.entries.keys().cloned().collect()
    }

    pub fn dots(&self, elem: &Value) -> Option<&BTreeSet<Dot>> {
        self.entries.get(elem)
    }

    pub fn context(&self) -> &CausalContext {
        &self.context
    }

    pub fn from_parts(entries: BTreeMap<Value, BTreeSet<Dot>>, context: CausalContext) -> Self {
        let entries = entries.into_iter().filter(|(_, d)| !d.is_empty()).collect();
        AwSet { entries, context }
    }
}

impl Lattice for AwSet {
    fn merge(&mut self, other: &Self) {
        let keys: BTreeSet<Value> = self.entries.keys().chain(other.entries.keys()).cloned().collect();
        let empty = BTreeSet::new();
        for k in keys {
            let mine = self.entries.get(&k).unwrap_or(&empty);
            let theirs = other.entries.get(&k).unwrap_or(&empty);
            let joined = join_dot_set(mine, &self.context, theirs, &other.context);
            if joined.is_empty() {
                self.entries.remove(&k);
            } else {
                self.entries.insert(k, joined);
            }
        }
        self.context.join_assign(&other.context);
    }

    fn leq(&self, other: &Self) -> bool {
        dots_leq(
            |d| self.entries.values().any(|s| s.contains(d)),
            &self.context,
            other.entries.values().flatten(),
            &other.context,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causality::VersionVector;

    fn set(items: &[&str]) -> BTreeSet<Value> {
        items.iter().map(|s| Value::from(*s)).collect()
    }

    fn ctx(entries: &[(&str, u64)]) -> CausalContext {
        entries
            .iter()
            .map(|(r, c)| (ReplicaId::from(*r), *c))
            .collect::<VersionVector>()
            .into()
    }

    #[test]
    fn seen_but_absent_dot_is_dropped() {
        let mut a = AwSet::new();
        a.add("x".into(), Dot::new("A", 1));
        let b = AwSet::from_parts(BTreeMap::new(), ctx(&[("A", 1)]));
        let m = a.join(&b);
        assert_eq!(m.elements(), set(&[]));
        assert_eq!(m.context(), &ctx(&[("A", 1)]));
    }

    #[test]
    fn fig1_merge() {
        let a = AwSet::from_parts(
            [(Value::from("a"), [Dot::new("A", 2)].into())].into(),
            ctx(&[("A", 2), ("Z", 1)]),
        );
        let b = AwSet::from_parts(BTreeMap::new(), ctx(&[("B", 1), ("Z", 1)]));
        let m = a.join(&b);
        assert_eq!(m.elements(), set(&["a"]));
        assert_eq!(m.dots(&"a".into()), Some(&[Dot::new("A", 2)].into()));
    }

    #[test]
    fn fig1_script() {
        let (ra, rb, rz) = (ReplicaId::from("A"), ReplicaId::from("B"), ReplicaId::from("Z"));
        let mut init = AwSet::new();
        init.add("a".into(), init.next_dot(&rz));
        let mut a = init.clone();
        let mut b = init;
        a.rmv(&"a".into());
        a.add("a".into(), a.next_dot(&ra));
        b.rmv(&"a".into());
        let _ = rb;
        let (a2, b2) = (a.join(&b), b.join(&a));
        assert_eq!(a2, b2);
        assert_eq!(a2.elements(), set(&["a"]));
    }

    #[test]
    fn fig2_script() {
        let (ra, rb) = (ReplicaId::from("A"), ReplicaId::from("B"));
        let mut a = AwSet::new();
        let mut b = AwSet::new();
        a.add("a".into(), a.next_dot(&ra));
        a.rmv(&"b".into());
        b.add("b".into(), b.next_dot(&rb));
        b.rmv(&"a".into());
        assert_eq!(a.join(&b).elements(), set(&["a", "b"]));
    }

    #[test]
    fn sequential_add_rmv() {
        let ra = ReplicaId::from("A");
        let mut s = AwSet::new();
        s.add("x".into(), s.next_dot(&ra));
        assert_eq!(s.rmv(&"x".into()), [Dot::new("A", 1)].into());
        assert_eq!(s.elements(), set(&[]));
        assert!(s.rmv(&"x".into()).is_empty());
    }
}
