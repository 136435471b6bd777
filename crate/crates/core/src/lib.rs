//! Square-root-free Adam variants, the HomeAdam switching rule, and tools to
//! probe their algorithmic stability and convergence bounds numerically.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod numkit;
pub mod optim;
pub mod problems;
pub mod stability;

pub use error::{Error, Result};
pub use numkit::{RngStream, Vec64};
pub use optim::{HyperParams, OptState, OptimizerKind, StepRecord};
