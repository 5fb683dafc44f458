//! Conflict-free replicated data types with three synchronization models
//! (full state, delta state, and causally delivered effectors), a reference
//! evaluator that computes each type's concurrency semantics from an explicit
//! happens-before history, and a deterministic simulator that drives replicas
//! over a lossy network and checks them against that reference.

pub mod causality;
pub mod codec;
pub mod delta;
pub mod extensions;
pub mod op_crdts;
pub mod oracle;
pub mod simulator;
pub mod state_crdts;
pub mod value;

pub use causality::{CausalContext, Dot, HybridTimestamp, ReplicaId, VersionVector};
pub use oracle::{History, Op, OpEvent};
pub use value::Value;
