//! Small reverse-mode automatic differentiation engine for CPU training of
//! convolutional and recurrent networks.
//!
//! Tensors are dense row-major arrays; every differentiable operation is a
//! method on [`Var`]. Matrix products go through `matrixmultiply`.

mod float;
mod graph;
pub mod ops;
mod optim;
mod params;
mod tensor;

pub use float::{gemm, Float, Mat};
pub use graph::{Grads, Graph, Var};
pub use ops::{concat, Conv2dSpec, ConvRoute, PoolSpec, RunningStats};
pub use optim::{AdamW, AdamWConfig};
pub use params::{fan_in_uniform, uniform, ParamId, ParamKind, ParamStore};
pub use tensor::{inverse_permutation, split_axis, strides, Tensor};
