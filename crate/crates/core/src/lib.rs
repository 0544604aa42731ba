//! Distributed multi-task least-squares value iteration on finite linear MDPs.

pub mod coordination;
pub mod harness;
pub mod error;
pub mod linmdp;
pub mod lsvi;
pub mod oracle;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
