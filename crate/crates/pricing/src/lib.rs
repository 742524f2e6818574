//! File formats, run configuration and the staged pipeline around
//! `pricing-core`.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod io;
pub mod pipeline;
pub mod schema;

pub use config::{ModelKind, Preset, RunConfig};
pub use pipeline::{Pipeline, Stage};
