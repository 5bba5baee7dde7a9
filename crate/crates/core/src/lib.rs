#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod mesh;
pub mod metrics;
pub mod morphometry;
pub mod phantom;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
