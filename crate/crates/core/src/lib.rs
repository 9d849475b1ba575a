//! Budgeted action advising for deep Q-learning.
//!
//! A student dueling double-DQN learns on GridWorld while an advising
//! strategy decides when to ask an exact teacher for the action. The A7
//! strategy pairs a contrastive (action-conditioned BYOL) novelty selector
//! with a behavior-cloned reuse model and decaying intrinsic rewards; the
//! NA, EA, RA, IAA and ANA baselines share the same harness.

pub mod baselines;
pub mod dqn;
pub mod env;
mod error;
pub mod harness;
pub mod nn;
pub mod percentile;
pub mod reuse;
pub mod selector;

pub use error::{Error, Result};
