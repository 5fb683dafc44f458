use serde::{Deserialize, Serialize};

use super::Lattice;
use crate::causality::HybridTimestamp;
use crate::value::Value;

/// Last-writer-wins register: keeps the write with the greatest timestamp.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwwRegister {
    current: Option<(HybridTimestamp, Value)>,
}

impl LwwRegister {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, value: Value, ts: HybridTimestamp) {
        let newer = match &self.current {
            None => true,
            Some((cur_ts, cur_v)) => (&ts, &value) > (cur_ts, cur_v),
        };
        if newer {
            self.current = Some((ts, value));
        }
    }

    pub fn read(&self) -> Option<&Value> {
        self.current.as_ref().map(|(_, v)| v)
    }

    pub fn timestamp(&self) -> Option<&HybridTimestamp> {
        self.current.as_ref().map(|(t, _)| t)
    }
}

impl Lattice for LwwRegister {
    fn merge(&mut self, other: &Self) {
        if let Some((ts, v)) = &other.current {
            self.write(v.clone(), ts.clone());
        }
    }

    fn leq(&self, other: &Self) -> bool {
        match (&self.current, &other.current) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some((ta, va)), Some((tb, vb))) => (ta, va) <= (tb, vb),
        }
    }
}
