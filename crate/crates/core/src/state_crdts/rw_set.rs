use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{dots_leq, join_dot_map, join_dot_set, Lattice};
use crate::causality::{CausalContext, Dot, ReplicaId};
use crate::value::Value;

/// Tags of one element.
///
/// An add-tag remembers the remove-tags that were live where it was issued
/// (those removes happened before it). Remove-tags are replaced only by a
/// later remove, so the live ones are the latest removes of the element.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Tags {
    adds: BTreeMap<Dot, BTreeSet<Dot>>,
    rmvs: BTreeSet<Dot>,
}

impl Tags {
    fn is_empty(&self) -> bool {
        self.adds.is_empty() && self.rmvs.is_empty()
    }

    /// Some add happened after every live remove.
    fn present(&self) -> bool {
        self.adds.values().any(|covered| self.rmvs.is_subset(covered))
    }
}

/// Remove-wins set: an element is present only if one of its adds happened
/// after all of its removes, so a remove concurrent with every add wins.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RwSet {
    elems: BTreeMap<Value, Tags>,
    context: CausalContext,
}

impl RwSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_dot(&self, replica: &ReplicaId) -> Dot {
        self.context.next_dot(replica)
    }

    pub fn add(&mut self, elem: Value, dot: Dot) {
        self.context.insert(dot.clone());
        let tags = self.elems.entry(elem).or_default();
        let covered = tags.rmvs.clone();
        // Earlier local adds are dominated by this one.
        tags.adds.clear();
        tags.adds.insert(dot, covered);
    }

    pub fn rmv(&mut self, elem: Value, dot: Dot) {
        self.context.insert(dot.clone());
        let tags = self.elems.entry(elem).or_default();
        tags.adds.clear();
        tags.rmvs.clear();
        tags.rmvs.insert(dot);
    }

    pub fn contains(&self, elem: &Value) -> bool {
        self.elems.get(elem).is_some_and(Tags::present)
    }

    pub fn elements(&self) -> BTreeSet<Value> {
        self.elems
            .iter()
            .filter(|(_, t)| t.present())
            .map(|(e, _)| e.clone())
            .collect()
    }

    pub fn context(&self) -> &CausalContext {
        &self.context
    }

    /// Live `(add-tags, rmv-tags)` of an element.
    pub fn tags(&self, elem: &Value) -> (BTreeSet<Dot>, BTreeSet<Dot>) {
        self.elems
            .get(elem)
            .map(|t| (t.adds.keys().cloned().collect(), t.rmvs.clone()))
            .unwrap_or_default()
    }

    fn has_dot(&self, d: &Dot) -> bool {
        self.elems
            .values()
            .any(|t| t.adds.contains_key(d) || t.rmvs.contains(d))
    }
}

impl Lattice for RwSet {
    fn merge(&mut self, other: &Self) {
        let keys: BTreeSet<Value> = self.elems.keys().chain(other.elems.keys()).cloned().collect();
        let empty = Tags::default();
        for k in keys {
            let mine = self.elems.get(&k).unwrap_or(&empty);
            let theirs = other.elems.get(&k).unwrap_or(&empty);
            let joined = Tags {
                adds: join_dot_map(&mine.adds, &self.context, &theirs.adds, &other.context),
                rmvs: join_dot_set(&mine.rmvs, &self.context, &theirs.rmvs, &other.context),
            };
            if joined.is_empty() {
                self.elems.remove(&k);
            } else {
                self.elems.insert(k, joined);
            }
        }
        self.context.join_assign(&other.context);
    }

    fn leq(&self, other: &Self) -> bool {
        let other_dots = other
            .elems
            .values()
            .flat_map(|t| t.adds.keys().chain(t.rmvs.iter()));
        dots_leq(|d| self.has_dot(d), &self.context, other_dots, &other.context)
    }
}
