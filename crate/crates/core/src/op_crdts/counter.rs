use serde::{Deserialize, Serialize};

use super::{GenContext, OpCrdt, UnsupportedOp};
use crate::oracle::Op;

/// Counter whose effectors carry signed amounts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    value: i64,
}

impl OpCounter {
    pub fn value(&self) -> i64 {
        self.value
    }
}

impl OpCrdt for OpCounter {
    type Payload = i64;

    fn generate(&self, op: &Op, _ctx: &GenContext) -> Result<i64, UnsupportedOp> {
        match op {
            Op::Inc(n) => Ok(*n as i64),
            Op::Dec(n) => Ok(-(*n as i64)),
            _ => Err(UnsupportedOp::new("opcounter", op)),
        }
    }

    fn effect(&mut self, amount: &i64) {
        self.value += amount;
    }
}
