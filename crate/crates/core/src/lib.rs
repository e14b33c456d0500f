//! Mixed-precision bit allocation for grouped weight quantization.
//!
//! Given per-layer bit-width choices and a black-box quality evaluator, the
//! search finds configurations trading quality loss against effective bits
//! per weight, spending a fixed number of evaluator calls.

pub mod engine;
pub mod error;
pub mod evaluators;
pub mod metrics;
pub mod moea;
pub mod oracle;
pub mod sensitivity;
pub mod space;
pub mod surrogate;

pub use error::{Error, Result};
