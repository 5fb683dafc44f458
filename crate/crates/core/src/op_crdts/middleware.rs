//! Reliable causal delivery of effectors over a lossy, duplicating,
//! reordering channel.
//!
//! Each replica keeps every effector it has applied, its own and relayed
//! ones, and retransmits to a peer whatever that peer has not acknowledged.
//! Incoming effectors are deduplicated by `(origin, seq)` and buffered until
//! their dependencies have been applied.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{generate, Effector, GenContext, OpCrdt, UnsupportedOp};
use crate::causality::{Dot, HybridTimestamp, ReplicaId, VersionVector};
use crate::oracle::Op;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MiddlewareError {
    #[error("effector {effector} delivered at {replica} before its dependencies {deps:?} (delivered {delivered:?})")]
    DependencyViolation {
        replica: ReplicaId,
        effector: Dot,
        deps: VersionVector,
        delivered: VersionVector,
    },
    #[error(transparent)]
    Unsupported(#[from] UnsupportedOp),
}

#[derive(Clone, Debug)]
pub struct CausalReplica<S: OpCrdt> {
    id: ReplicaId,
    state: S,
    delivered: VersionVector,
    log: Vec<Effector<S::Payload>>,
    pending: BTreeMap<Dot, Effector<S::Payload>>,
    acked: BTreeMap<ReplicaId, VersionVector>,
}

impl<S: OpCrdt> CausalReplica<S> {
    pub fn new(id: ReplicaId) -> Self {
        CausalReplica {
            id,
            state: S::default(),
            delivered: VersionVector::new(),
            log: Vec::new(),
            pending: BTreeMap::new(),
            acked: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> &ReplicaId {
        &self.id
    }

    pub fn state(&self) -> &S {
        &self.state
    }

    /// Effectors applied here so far, as a version vector.
    pub fn delivered(&self) -> &VersionVector {
        &self.delivered
    }

    /// Applied effectors in application order.
    pub fn log(&self) -> &[Effector<S::Payload>] {
        &self.log
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Runs the generator for a local update and applies the effector here.
    pub fn submit(&mut self, op: &Op, ts: HybridTimestamp) -> Result<Effector<S::Payload>, MiddlewareError> {
        let ctx = GenContext {
            replica: self.id.clone(),
            dot: self.delivered.next_dot(&self.id),
            ts,
        };
        let eff = generate(&self.state, op, &ctx, self.delivered.clone())?;
        self.deliver(eff.clone())?;
        Ok(eff)
    }

    /// Effectors `peer` has not acknowledged yet.
    pub fn outgoing(&self, peer: &ReplicaId) -> Vec<Effector<S::Payload>> {
        let empty = VersionVector::new();
        let acked = self.acked.get(peer).unwrap_or(&empty);
        self.log
            .iter()
            .filter(|e| &e.origin != peer && !acked.contains(&e.id()))
            .cloned()
            .collect()
    }

    pub fn on_ack(&mut self, peer: &ReplicaId, delivered: &VersionVector) {
        self.acked.entry(peer.clone()).or_default().join_assign(delivered);
    }

    /// Accepts an effector from the network. Returns the ids of every effector
    /// this made deliverable, in application order.
    pub fn receive(&mut self, eff: Effector<S::Payload>) -> Result<Vec<Dot>, MiddlewareError> {
        let id = eff.id();
        if self.delivered.contains(&id) || self.pending.contains_key(&id) {
            return Ok(Vec::new());
        }
        self.pending.insert(id, eff);
        let mut applied = Vec::new();
        while let Some(next) = self.pending.values().find(|e| self.is_ready(e)).map(|e| e.id()) {
            let eff = self.pending.remove(&next).expect("found above");
            self.deliver(eff)?;
            applied.push(next);
        }
        Ok(applied)
    }

    fn is_ready(&self, eff: &Effector<S::Payload>) -> bool {
        eff.seq == self.delivered.get(&eff.origin) + 1 && eff.deps.leq(&self.delivered)
    }

    /// Applies an effector, refusing one whose dependencies are unmet.
    pub fn deliver(&mut self, eff: Effector<S::Payload>) -> Result<(), MiddlewareError> {
        if !self.is_ready(&eff) {
            return Err(MiddlewareError::DependencyViolation {
                replica: self.id.clone(),
                effector: eff.id(),
                deps: eff.deps.clone(),
                delivered: self.delivered.clone(),
            });
        }
        self.state.effect(&eff.payload);
        self.delivered.observe(&eff.id());
        self.log.push(eff);
        Ok(())
    }
}
