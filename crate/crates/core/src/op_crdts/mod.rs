//! Operation-based replicated types.
//!
//! An update runs a side-effect-free *generator* at the submitting replica,
//! which reads local state and returns an [`Effector`]. The effector is then
//! applied at every replica, the origin first. Replicas converge when the
//! effectors of concurrent updates commute and every effector is delivered
//! exactly once, after the effectors it depends on; [`middleware`] provides
//! that delivery over a lossy channel.

mod aw_set;
mod counter;
pub mod middleware;
mod ww_counter;

use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use aw_set::{AwPayload, OpAwSet};
pub use counter::OpCounter;
pub use middleware::{CausalReplica, MiddlewareError};
pub use ww_counter::{OpWwCounter, WwPayload};

use crate::causality::{Dot, HybridTimestamp, ReplicaId, VersionVector};
pub use crate::oracle::UnsupportedOp;
use crate::oracle::Op;

/// A generated effect, stamped with its origin, its per-origin sequence
/// number and the effectors already applied at the origin when it was made.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effector<P> {
    pub origin: ReplicaId,
    pub seq: u64,
    pub deps: VersionVector,
    pub payload: P,
}

impl<P> Effector<P> {
    pub fn id(&self) -> Dot {
        Dot::new(self.origin.clone(), self.seq)
    }

    /// Neither effector was applied at the other's origin before generation.
    pub fn concurrent_with<Q>(&self, other: &Effector<Q>) -> bool {
        !other.deps.contains(&self.id()) && !self.deps.contains(&other.id())
    }
}

/// What a generator may read besides the local state.
#[derive(Clone, Debug)]
pub struct GenContext {
    pub replica: ReplicaId,
    /// Identity the new effector will carry; also the fresh dot for types
    /// that tag their entries.
    pub dot: Dot,
    pub ts: HybridTimestamp,
}

pub trait OpCrdt: Clone + Default + PartialEq + Debug {
    type Payload: Clone + PartialEq + Debug + Serialize + DeserializeOwned;

    /// Must not modify `self`.
    fn generate(&self, op: &Op, ctx: &GenContext) -> Result<Self::Payload, UnsupportedOp>;

    fn effect(&mut self, payload: &Self::Payload);
}

pub fn generate<S: OpCrdt>(
    state: &S,
    op: &Op,
    ctx: &GenContext,
    deps: VersionVector,
) -> Result<Effector<S::Payload>, UnsupportedOp> {
    let payload = state.generate(op, ctx)?;
    Ok(Effector {
        origin: ctx.dot.replica.clone(),
        seq: ctx.dot.counter,
        deps,
        payload,
    })
}

pub fn effect<S: OpCrdt>(state: &mut S, eff: &Effector<S::Payload>) {
    state.effect(&eff.payload);
}

/// Both application orders of two effectors give the same state.
pub fn commutes<S: OpCrdt>(a: &Effector<S::Payload>, b: &Effector<S::Payload>, state: &S) -> bool {
    let mut ab = state.clone();
    ab.effect(&a.payload);
    ab.effect(&b.payload);
    let mut ba = state.clone();
    ba.effect(&b.payload);
    ba.effect(&a.payload);
    ab == ba
}
