//! State-based replicated types.
//!
//! Every type here is a join semilattice: [`Lattice::leq`] is a partial order,
//! [`Lattice::merge`] computes the least upper bound, and each update method
//! only moves a state upward.
//!
//! The dotted types ([`MvRegister`], [`AwSet`], [`RwSet`]) pair a dot store
//! with a [`CausalContext`]. Their merge keeps a dot when both sides have it,
//! or when one side has it and the other side has never seen it. A dot that
//! one side has seen but no longer holds was deleted there, and stays deleted.

mod aw_set;
mod gcounter;
mod lww_register;
mod lww_set;
mod mv_register;
mod pncounter;
mod rw_set;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

pub use aw_set::AwSet;
pub use gcounter::GCounter;
pub use lww_register::LwwRegister;
pub use lww_set::LwwSet;
pub use mv_register::MvRegister;
pub use pncounter::PnCounter;
pub use rw_set::RwSet;

use crate::causality::{CausalContext, Dot};

pub trait Lattice: Clone + PartialEq + Debug {
    fn merge(&mut self, other: &Self);

    fn leq(&self, other: &Self) -> bool;

    fn join(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.merge(other);
        out
    }
}

pub fn merge<S: Lattice>(a: &S, b: &S) -> S {
    a.join(b)
}

/// Causal-context join of two dot-keyed stores.
pub(crate) fn join_dot_map<V: Clone>(
    a: &BTreeMap<Dot, V>,
    a_ctx: &CausalContext,
    b: &BTreeMap<Dot, V>,
    b_ctx: &CausalContext,
) -> BTreeMap<Dot, V> {
    let mut out = BTreeMap::new();
    for (d, v) in a {
        if b.contains_key(d) || !b_ctx.contains(d) {
            out.insert(d.clone(), v.clone());
        }
    }
    for (d, v) in b {
        if !a.contains_key(d) && !a_ctx.contains(d) {
            out.insert(d.clone(), v.clone());
        }
    }
    out
}

pub(crate) fn join_dot_set(
    a: &BTreeSet<Dot>,
    a_ctx: &CausalContext,
    b: &BTreeSet<Dot>,
    b_ctx: &CausalContext,
) -> BTreeSet<Dot> {
    a.iter()
        .filter(|d| b.contains(*d) || !b_ctx.contains(d))
        .chain(b.iter().filter(|d| !a.contains(*d) && !a_ctx.contains(d)))
        .cloned()
        .collect()
}

/// Order on dot stores: `(a, a_ctx) ≤ (b, b_ctx)` iff `a_ctx ⊆ b_ctx` and every
/// dot `b` holds that `a` has already seen is still held by `a`.
pub(crate) fn dots_leq<'a>(
    a_has: impl Fn(&Dot) -> bool,
    a_ctx: &CausalContext,
    b_dots: impl IntoIterator<Item = &'a Dot>,
    b_ctx: &CausalContext,
) -> bool {
    a_ctx.leq(b_ctx) && b_dots.into_iter().all(|d| !a_ctx.contains(d) || a_has(d))
}
