//! Deterministic replication harness.
//!
//! A [`Scenario`] scripts updates, queries, one-way sync sessions and
//! network conditions over a set of replicas. The engine executes it on a
//! simulated network whose losses, duplicates and delays are drawn from a
//! seeded [`rng::SplitMix64`], records a [`Trace`], and builds the
//! happens-before [`History`](crate::oracle::History) of the updates as they
//! run. [`check_convergence`] then compares every replica with each other
//! and with the reference evaluation of that history.

mod check;
mod engine;
mod fuzz;
mod nodes;
pub mod rng;
mod scenario;
mod trace;

pub use check::{check_convergence, oracle_eval, Divergence};
pub use engine::{run, run_state, run_with, QueryRecord, RunResult, RunStats, SimError, MAX_FULL_SYNC_ROUNDS};
pub use fuzz::{
    audit_topk_bandwidth, check_run, fuzz, generate_scenario, run_seed, FuzzConfig, FuzzError, FuzzSummary,
    MAX_OPS, MAX_REPLICAS,
};
pub use nodes::{
    audit_commutativity, Applied, DeltaNode, Learned, Node, OpMessage, OpNode, OpQuery, QueryValue, Receipt,
    Replicated, StateNode, TopKNode,
};
pub use scenario::{
    shipped, shipped_names, supported_models, CrdtSpec, Keyword, NetConfig, Scenario, ScenarioError, Step,
    SyncModel, SyncPair, TYPE_TAGS,
};
pub use trace::{EventKind, Trace, TraceEvent};
