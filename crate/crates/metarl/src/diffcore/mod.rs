//! Minimal reverse-mode autodiff over dense `f64` matrices, parameter
//! vectors with named segment layouts, SGD/Adam update rules, and a
//! finite-difference oracle used to validate every gradient path.

mod finite_diff;
mod graph;
pub mod gradcheck;
mod matrix;
mod params;
mod update;

pub use finite_diff::{finite_diff_oracle, relative_gradient_error};
pub use graph::{Graph, GraphBuilder, NodeId};
pub use matrix::Mat;
pub use params::{Layout, LayoutBuilder, ParamVector, Segment};
pub use update::{apply_update, AdamConfig, AdamState, UpdateRule};

/// Errors from graph evaluation, parameter binding, updates and
/// (de)serialization.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("input length {got} does not match declared arity {want}")]
    InputArity { got: usize, want: usize },
    #[error("non-finite value at node {node} ({op})")]
    NonFinite { node: usize, op: String },
    #[error("gradients require a 1x1 scalar output, got {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },
    #[error("parameter segment `{name}` not found")]
    MissingSegment { name: String },
    #[error("segment `{name}` has {len} values, expected {rows}x{cols}")]
    SegmentShape { name: String, len: usize, rows: usize, cols: usize },
    #[error("layout mismatch: {detail}")]
    LayoutMismatch { detail: String },
    #[error("corrupt record: {detail}")]
    Corrupt { detail: String },
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
}
