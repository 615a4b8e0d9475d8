//! Minimal reverse-mode autodiff: tensors, a recording graph with the
//! operations the network needs, Adam, a finite-difference checker and
//! the `EGVW` tensor container.

mod adam;
pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod ops;
mod real;
mod tensor;

pub use adam::AdamState;
pub use attention::{attention_block, window_attention, AttentionWeights};
pub use gradcheck::{finite_diff_check, GradCheckReport, REGISTERED_OPS};
pub use graph::{Graph, Var, GATHER_ZERO};
pub use ops::sample::SampleMode;
pub use real::Real;
pub use tensor::{ParamStore, Tensor};
