//! Types beyond the core catalog: an escrow counter that never goes negative,
//! and a top-K set whose replicas store only what readers can see.

mod bounded_counter;
mod top_k;

pub use bounded_counter::{BoundedCounter, BoundedCounterError};
pub use top_k::{TopKEntry, TopKMessage, TopKSet};
