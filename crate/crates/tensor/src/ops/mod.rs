//! Differentiable operations. Each submodule adds forward methods to
//! [`Graph`](crate::Graph) and supplies the matching backward kernels.

pub(crate) mod conv;
pub(crate) mod elementwise;
pub(crate) mod linalg;
pub(crate) mod norm;
pub(crate) mod shape;
