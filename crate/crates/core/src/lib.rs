#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::redundant_guards, clippy::should_implement_trait)]

pub mod cli;
pub mod constraints;
pub mod descriptors;
pub mod energy;
pub mod evo;
pub mod error;
pub mod expr;
pub mod fit;
pub mod forms;
pub mod grid;
pub mod lda;

pub use error::{Result, XcError};
