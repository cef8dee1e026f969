//! File formats, synthetic data, the parallel ablation runner and helpers
//! behind the `fnrgnn` command-line tool.

pub mod ablation;
pub mod checkpoint;
pub mod error;
pub mod graph_io;
pub mod json;
pub mod output;
pub mod synthetic;

pub use error::{Error, Result};
