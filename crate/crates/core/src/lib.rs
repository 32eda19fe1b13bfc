//! Cold-start-aware microservice scheduling on heterogeneous edge nodes.
//!
//! The crate bundles a slot-sequential scheduling simulator, a greedy
//! delay/energy expert, a small reverse-mode autodiff kernel, recurrent and
//! feed-forward actors, behavior-cloning pretraining and masked discrete
//! soft actor-critic fine-tuning, plus the experiment harness that wires
//! them together.

pub mod bc;
pub mod env;
pub mod error;
pub mod expert;
pub mod harness;
pub mod mask;
pub mod model;
pub mod ndiff;
pub mod policy;
pub mod rng;
pub mod sac;
pub mod textio;

pub use error::{Error, Result};
