//! Permutation-invariant set representations: DeepSets and Set Twister.
//!
//! Set Twister pools `M` learned per-element embeddings over a sequence and
//! combines every nondecreasing `k`-tuple of the pooled vectors with learned
//! coefficient vectors through elementwise products, so the pooled
//! representation carries `k`-ary interactions at cost linear in the sequence
//! length. DeepSets is the `M = k = 1` case.

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod seeds;
pub mod setrep;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
