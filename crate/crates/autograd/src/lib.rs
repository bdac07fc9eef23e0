//! Reverse-mode automatic differentiation over dense CPU tensors.
//!
//! A [`Graph`] is an append-only tape. Operations are methods on [`Var`]
//! handles; each records its forward value plus a closure that maps the output
//! gradient to input gradients. [`Graph::backward`] walks the tape once in
//! reverse.
//!
//! ```
//! use svc_autograd::{Graph, Tensor};
//!
//! let g = Graph::<f64>::new();
//! let x = g.input(Tensor::from_f64(&[3], &[1.0, 2.0, 3.0]));
//! let loss = (x * x).sum();
//! let grads = g.backward(loss);
//! assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```
//!
//! All kernels are deterministic: parallel loops split only over independent
//! outputs (see [`exec`]), and reductions run in a fixed order.

pub mod check;
pub mod exec;
mod graph;
mod ops;
pub mod optim;
mod params;
mod real;
mod tensor;

pub use exec::Exec;
pub use graph::{BackwardCtx, BackwardFn, Gradients, Graph, Var};
pub use ops::conv::{col2im, im2col, Conv1dSpec};
pub use ops::matmul::matmul_tensor;
pub use ops::softmax::logsumexp;
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use tensor::{numel, strides, Tensor};
