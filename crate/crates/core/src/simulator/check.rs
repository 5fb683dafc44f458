use std::fmt;

use super::engine::RunResult;
use super::nodes::QueryValue;
use super::scenario::CrdtSpec;
use crate::causality::ReplicaId;
use crate::oracle::{self, History, OracleError};

/// Reference read for `spec` over `history`.
pub fn oracle_eval(spec: &CrdtSpec, history: &History) -> Result<QueryValue, OracleError> {
    Ok(match spec {
        CrdtSpec::Gcounter | CrdtSpec::Pncounter | CrdtSpec::Opcounter => QueryValue::Int(oracle::eval_counter(history)?),
        CrdtSpec::Wwcounter => QueryValue::Int(oracle::eval_ww_counter(history)?),
        CrdtSpec::Lwwreg => QueryValue::Register(oracle::eval_lww_register(history)?),
        CrdtSpec::Mvreg => QueryValue::Values(oracle::eval_mv_register(history)?),
        CrdtSpec::Awset => QueryValue::Set(oracle::eval_aw_set(history)?),
        CrdtSpec::Rwset => QueryValue::Set(oracle::eval_rw_set(history)?),
        CrdtSpec::Lwwset => QueryValue::Set(oracle::eval_lww_set(history)?),
        CrdtSpec::Bcounter { initial, .. } => QueryValue::Int(oracle::eval_bounded_counter(history, *initial)?),
        CrdtSpec::Topk { k } => QueryValue::Ranked(oracle::eval_top_k(history, *k)?),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Divergence {
    /// Two replicas read differently.
    Replicas {
        left: (ReplicaId, QueryValue),
        right: (ReplicaId, QueryValue),
        oracle: Option<QueryValue>,
    },
    /// The replicas agree with each other but not with the reference.
    Oracle { replica: (ReplicaId, QueryValue), oracle: QueryValue },
    /// A safety invariant or audit failed during the run.
    Invariant(String),
    /// The reference could not evaluate the induced history.
    History(String),
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::Replicas { left, right, oracle } => {
                write!(f, "replicas diverge: {} reads {}, {} reads {}", left.0, left.1, right.0, right.1)?;
                if let Some(o) = oracle {
                    write!(f, " (oracle: {o})")?;
                }
                Ok(())
            }
            Divergence::Oracle { replica, oracle } => {
                write!(f, "replica {} reads {}, oracle says {oracle}", replica.0, replica.1)
            }
            Divergence::Invariant(v) => write!(f, "invariant violated: {v}"),
            Divergence::History(e) => write!(f, "cannot evaluate history: {e}"),
        }
    }
}

/// Ok iff no invariant failed, every replica reads the same value, and that
/// value is the reference evaluation of the induced history.
pub fn check_convergence(result: &RunResult) -> Result<(), Divergence> {
    if let Some(v) = result.violations.first() {
        return Err(Divergence::Invariant(v.clone()));
    }
    let oracle = oracle_eval(&result.scenario.crdt, &result.history).map_err(|e| Divergence::History(e.to_string()));
    let Some(first) = result.finals.first() else {
        return Ok(());
    };
    if let Some(other) = result.finals.iter().find(|(_, v)| *v != first.1) {
        return Err(Divergence::Replicas {
            left: first.clone(),
            right: other.clone(),
            oracle: oracle.ok(),
        });
    }
    let oracle = oracle?;
    if first.1 != oracle {
        return Err(Divergence::Oracle {
            replica: first.clone(),
            oracle,
        });
    }
    Ok(())
}
