//! File formats, run configuration, parallel ensembles and the command-line
//! pipeline around [`qnd_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod ensemble;
pub mod error;
pub mod pipeline;
pub mod records;
pub mod stats;

pub use config::RunConfig;
pub use error::{LabError, Result};
pub use pipeline::{run_pipeline, Command, RunReport};
