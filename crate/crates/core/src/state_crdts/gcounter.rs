use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Lattice;
use crate::causality::ReplicaId;

/// Grow-only counter: one monotone entry per replica, value is the sum.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GCounter {
    counts: BTreeMap<ReplicaId, u64>,
}

impl GCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inc(&mut self, replica: &ReplicaId) {
        self.inc_by(replica, 1);
    }

    pub fn inc_by(&mut self, replica: &ReplicaId, n: u64) {
        if n > 0 {
            *self.counts.entry(replica.clone()).or_insert(0) += n;
        }
    }

    pub fn get(&self, replica: &ReplicaId) -> u64 {
        self.counts.get(replica).copied().unwrap_or(0)
    }

    pub fn value(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ReplicaId, u64)> {
        self.counts.iter().map(|(r, &n)| (r, n))
    }

    /// A counter holding only `replica`'s entry.
    pub fn single(replica: &ReplicaId, count: u64) -> Self {
        let mut g = GCounter::new();
        g.inc_by(replica, count);
        g
    }
}

impl Lattice for GCounter {
    fn merge(&mut self, other: &Self) {
        for (r, &n) in &other.counts {
            let e = self.counts.entry(r.clone()).or_insert(0);
            *e = (*e).max(n);
        }
    }

    fn leq(&self, other: &Self) -> bool {
        self.counts.iter().all(|(r, &n)| n <= other.get(r))
    }
}
