//! Clustering of sparse high-dimensional binary data by minimum coding cost.
//!
//! Each cluster is described by a binary representative and a distribution of
//! the positions where members differ from it. Rows are assigned so that the
//! average number of bits needed to encode a row, plus the bits needed to name
//! its cluster, is as small as possible.

pub mod error;
pub mod evaluation;
pub mod model;
pub mod optimizer;
pub mod report;
pub mod sparse;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{ClusterStats, InitStrategy, ModelConfig, Partition};

pub use sparse::{xor_row, Format, SparseBinaryDataset, SparseRow};
pub use optimizer::{run, run_restarts, OptimizerReport};
