//! Dense tensors and a tape-based reverse-mode differentiation engine
//! covering the operations the style, flow and mask networks need.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use gradcheck::{gradcheck, relative_error, GradcheckReport, GRADCHECK_FLOOR};
pub use graph::{ElementwiseOp, Graph, ReduceOp, Var};
pub use tensor::Tensor;
