use serde::{Deserialize, Serialize};

use super::{GenContext, OpCrdt, UnsupportedOp};
use crate::causality::HybridTimestamp;
use crate::oracle::Op;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WwPayload {
    Write { value: i64, ts: HybridTimestamp },
    /// Inc/dec amount, tagged with the write it causally follows.
    Delta { amount: i64, after: Option<HybridTimestamp> },
}

/// Write-wins counter: the value is the last write (by timestamp) plus the
/// increments and decrements that happened after that write. An inc/dec
/// concurrent with the winning write has no effect.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpWwCounter {
    base_ts: Option<HybridTimestamp>,
    base: i64,
    delta: i64,
}

impl OpWwCounter {
    pub fn value(&self) -> i64 {
        self.base + self.delta
    }
}

impl OpCrdt for OpWwCounter {
    type Payload = WwPayload;

    fn generate(&self, op: &Op, ctx: &GenContext) -> Result<WwPayload, UnsupportedOp> {
        let amount = match op {
            Op::Assign(v) => {
                return Ok(WwPayload::Write {
                    value: *v,
                    ts: ctx.ts.clone(),
                })
            }
            Op::Inc(n) => *n as i64,
            Op::Dec(n) => -(*n as i64),
            _ => return Err(UnsupportedOp::new("wwcounter", op)),
        };
        Ok(WwPayload::Delta {
            amount,
            after: self.base_ts.clone(),
        })
    }

    fn effect(&mut self, payload: &WwPayload) {
        match payload {
            WwPayload::Write { value, ts } => {
                if self.base_ts.as_ref().is_none_or(|cur| ts > cur) {
                    self.base_ts = Some(ts.clone());
                    self.base = *value;
                    // Under causal delivery no inc/dec that follows this
                    // write has been applied yet.
                    self.delta = 0;
                }
            }
            WwPayload::Delta { amount, after } => {
                if *after == self.base_ts {
                    self.delta += amount;
                }
            }
        }
    }
}
