//! Dense f32 tensors with tape-based reverse-mode differentiation.
//!
//! The engine is deliberately small: row-major contiguous storage, explicit
//! shapes with no implicit broadcasting, and a single matrix-product kernel
//! that convolution and attention both reduce to.

pub mod checkpoint;
pub mod conv;
mod error;
pub mod flops;
pub mod gemm;
pub mod gradcheck;
mod graph;
pub mod init;
mod ops;
pub mod par;
mod params;
mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Result, TensorError};
pub use flops::{FlopConvention, FlopCount};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{CustomRule, Graph, Var};
pub use ops::conv::Conv2dSpec;
pub use ops::norm::{BatchNormSpec, LAYER_NORM_EPS};
pub use params::{ParamId, ParamKind, ParamStore};
pub use tensor::{numel, strides, Tensor};
