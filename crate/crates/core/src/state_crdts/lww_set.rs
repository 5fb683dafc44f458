use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Lattice;
use crate::causality::HybridTimestamp;
use crate::value::Value;

/// Last-writer-wins set: one `(timestamp, present)` record per element.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwwSet {
    records: BTreeMap<Value, (HybridTimestamp, bool)>,
}

impl LwwSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, elem: Value, ts: HybridTimestamp) {
        self.apply(elem, ts, true);
    }

    pub fn rmv(&mut self, elem: Value, ts: HybridTimestamp) {
        self.apply(elem, ts, false);
    }

    pub fn contains(&self, elem: &Value) -> bool {
        self.records.get(elem).is_some_and(|(_, p)| *p)
    }

    pub fn elements(&self) -> BTreeSet<Value> {
        self.records
            .iter()
            .filter(|(_, (_, p))| *p)
            .map(|(e, _)| e.clone())
            .collect()
    }

    fn apply(&mut self, elem: Value, ts: HybridTimestamp, present: bool) {
        match self.records.get_mut(&elem) {
            Some(rec) => {
                if (&ts, present) > (&rec.0, rec.1) {
                    *rec = (ts, present);
                }
            }
            None => {
                self.records.insert(elem, (ts, present));
            }
        }
    }
}

impl Lattice for LwwSet {
    fn merge(&mut self, other: &Self) {
        for (e, (ts, p)) in &other.records {
            self.apply(e.clone(), ts.clone(), *p);
        }
    }

    fn leq(&self, other: &Self) -> bool {
        self.records.iter().all(|(e, (ts, p))| {
            other
                .records
                .get(e)
                .is_some_and(|(ots, op)| (ts, p) <= (ots, op))
        })
    }
}
