use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{GenContext, OpCrdt, UnsupportedOp};
use crate::causality::Dot;
use crate::oracle::Op;
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AwPayload {
    Add { elem: Value, dot: Dot },
    /// Dots of `elem` visible at the origin when the remove was generated.
    Rmv { elem: Value, dots: BTreeSet<Dot> },
}

/// Add-wins set driven by effectors: a remove deletes exactly the add-dots
/// its generator observed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpAwSet {
    entries: BTreeMap<Value, BTreeSet<Dot>>,
}

impl OpAwSet {
    pub fn elements(&self) -> BTreeSet<Value> {
        self.entries.keys().cloned().collect()
    }

    pub fn contains(&self, elem: &Value) -> bool {
        self.entries.contains_key(elem)
    }
}

impl OpCrdt for OpAwSet {
    type Payload = AwPayload;

    fn generate(&self, op: &Op, ctx: &GenContext) -> Result<AwPayload, UnsupportedOp> {
        match op {
            Op::Add(e) => Ok(AwPayload::Add {
                elem: e.clone(),
                dot: ctx.dot.clone(),
            }),
            Op::Rmv(e) => Ok(AwPayload::Rmv {
                elem: e.clone(),
                dots: self.entries.get(e).cloned().unwrap_or_default(),
            }),
            _ => Err(UnsupportedOp::new("awset", op)),
        }
    }

    fn effect(&mut self, payload: &AwPayload) {
        match payload {
            AwPayload::Add { elem, dot } => {
                self.entries.entry(elem.clone()).or_default().insert(dot.clone());
            }
            AwPayload::Rmv { elem, dots } => {
                if let Some(live) = self.entries.get_mut(elem) {
                    live.retain(|d| !dots.contains(d));
                    if live.is_empty() {
                        self.entries.remove(elem);
                    }
                }
            }
        }
    }
}
