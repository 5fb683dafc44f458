use serde::{Deserialize, Serialize};

use super::{GCounter, Lattice};
use crate::causality::ReplicaId;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnCounter {
    incs: GCounter,
    decs: GCounter,
}

impl PnCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inc(&mut self, replica: &ReplicaId) {
        self.incs.inc(replica);
    }

    pub fn dec(&mut self, replica: &ReplicaId) {
        self.decs.inc(replica);
    }

    pub fn inc_by(&mut self, replica: &ReplicaId, n: u64) {
        self.incs.inc_by(replica, n);
    }

    pub fn dec_by(&mut self, replica: &ReplicaId, n: u64) {
        self.decs.inc_by(replica, n);
    }

    pub fn value(&self) -> i64 {
        self.incs.value() as i64 - self.decs.value() as i64
    }

    pub fn increments(&self) -> &GCounter {
        &self.incs
    }

    pub fn decrements(&self) -> &GCounter {
        &self.decs
    }

    pub fn from_parts(incs: GCounter, decs: GCounter) -> Self {
        PnCounter { incs, decs }
    }
}

impl Lattice for PnCounter {
    fn merge(&mut self, other: &Self) {
        self.incs.merge(&other.incs);
        self.decs.merge(&other.decs);
    }

    fn leq(&self, other: &Self) -> bool {
        self.incs.leq(&other.incs) && self.decs.leq(&other.decs)
    }
}
