#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod objective;
pub mod oracle;
pub mod prox;
pub mod solvers;
pub mod types;
pub mod metrics;
pub mod presets;
pub mod harness;

pub use error::{AdmmError, Result};
