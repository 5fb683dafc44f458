use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causality::ReplicaId;
use crate::state_crdts::Lattice;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BoundedCounterError {
    #[error("allocation sums to {allocated}, expected {initial}")]
    AllocationMismatch { initial: u64, allocated: u64 },
    #[error("allocation names {0}, which is not a replica")]
    UnknownReplica(ReplicaId),
    #[error("{replica} holds {available} rights, needs {requested}")]
    InsufficientRights {
        replica: ReplicaId,
        available: u64,
        requested: u64,
    },
}

/// Non-negative counter that escrows decrement rights across replicas.
///
/// `rights[i][i]` is i's initial share plus its increments, `rights[i][j]`
/// the rights i handed to j, and `used[i]` the decrements i performed. Each
/// entry is written only by its row's replica and never shrinks, so merge is
/// an entrywise max.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundedCounter {
    rights: BTreeMap<ReplicaId, BTreeMap<ReplicaId, u64>>,
    used: BTreeMap<ReplicaId, u64>,
}

impl BoundedCounter {
    pub fn new(
        initial: u64,
        replicas: &[ReplicaId],
        allocation: &BTreeMap<ReplicaId, u64>,
    ) -> Result<Self, BoundedCounterError> {
        if let Some(r) = allocation.keys().find(|r| !replicas.contains(r)) {
            return Err(BoundedCounterError::UnknownReplica(r.clone()));
        }
        let allocated = allocation.values().sum();
        if allocated != initial {
            return Err(BoundedCounterError::AllocationMismatch { initial, allocated });
        }
        let mut bc = BoundedCounter::default();
        for (r, &n) in allocation {
            bc.bump(r, r, n);
        }
        Ok(bc)
    }

    fn right(&self, from: &ReplicaId, to: &ReplicaId) -> u64 {
        self.rights.get(from).and_then(|row| row.get(to)).copied().unwrap_or(0)
    }

    fn bump(&mut self, from: &ReplicaId, to: &ReplicaId, n: u64) {
        if n > 0 {
            *self.rights.entry(from.clone()).or_default().entry(to.clone()).or_insert(0) += n;
        }
    }

    /// Every replica with an entry in this state.
    pub fn replicas(&self) -> BTreeSet<ReplicaId> {
        let mut out: BTreeSet<ReplicaId> = self.used.keys().cloned().collect();
        for (from, row) in &self.rights {
            out.insert(from.clone());
            out.extend(row.keys().cloned());
        }
        out
    }

    pub fn used(&self, replica: &ReplicaId) -> u64 {
        self.used.get(replica).copied().unwrap_or(0)
    }

    /// Decrements `replica` may still perform on its own.
    pub fn local_rights(&self, replica: &ReplicaId) -> i64 {
        let own = self.right(replica, replica) as i64;
        let received: i64 = self
            .rights
            .iter()
            .filter(|(from, _)| *from != replica)
            .map(|(_, row)| row.get(replica).copied().unwrap_or(0) as i64)
            .sum();
        let given: i64 = self
            .rights
            .get(replica)
            .into_iter()
            .flatten()
            .filter(|(to, _)| *to != replica)
            .map(|(_, &n)| n as i64)
            .sum();
        own + received - given - self.used(replica) as i64
    }

    pub fn value(&self) -> i64 {
        let total: i64 = self.rights.iter().map(|(r, row)| row.get(r).copied().unwrap_or(0) as i64).sum();
        total - self.used.values().map(|&n| n as i64).sum::<i64>()
    }

    pub fn inc(&mut self, replica: &ReplicaId, n: u64) {
        self.bump(replica, replica, n);
    }

    fn check(&self, replica: &ReplicaId, n: u64) -> Result<(), BoundedCounterError> {
        let available = self.local_rights(replica).max(0) as u64;
        if available < n {
            return Err(BoundedCounterError::InsufficientRights {
                replica: replica.clone(),
                available,
                requested: n,
            });
        }
        Ok(())
    }

    pub fn dec(&mut self, replica: &ReplicaId, n: u64) -> Result<(), BoundedCounterError> {
        self.check(replica, n)?;
        if n > 0 {
            *self.used.entry(replica.clone()).or_insert(0) += n;
        }
        Ok(())
    }

    pub fn transfer(&mut self, from: &ReplicaId, to: &ReplicaId, n: u64) -> Result<(), BoundedCounterError> {
        if n == 0 || from == to {
            return Ok(());
        }
        self.check(from, n)?;
        self.bump(from, to, n);
        Ok(())
    }
}

impl Lattice for BoundedCounter {
    fn merge(&mut self, other: &Self) {
        for (from, row) in &other.rights {
            let mine = self.rights.entry(from.clone()).or_default();
            for (to, &n) in row {
                let e = mine.entry(to.clone()).or_insert(0);
                *e = (*e).max(n);
            }
        }
        for (r, &n) in &other.used {
            let e = self.used.entry(r.clone()).or_insert(0);
            *e = (*e).max(n);
        }
    }

    fn leq(&self, other: &Self) -> bool {
        self.rights
            .iter()
            .all(|(from, row)| row.iter().all(|(to, &n)| n <= other.right(from, to)))
            && self.used.iter().all(|(r, &n)| n <= other.used(r))
    }
}
