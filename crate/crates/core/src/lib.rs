//! Kernel partial least squares regression.
//!
//! The fit is a Lanczos-type process on the kernel matrix, so besides the
//! predictions it yields a small bidiagonal factor L whose Gram matrix
//! D = LᵀL carries Ritz approximations of the kernel spectrum. From these
//! the crate computes
//!
//! * degrees of freedom of the fit, exactly in O(n³) or approximately in
//!   O(m_max n²) ([`sensitivity`]),
//! * pointwise confidence bands in O(m n²) per query point ([`intervals`]),
//! * gMDL model selection over kernel width and component count
//!   ([`modelsel`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod intervals;
pub mod kernels;
pub mod kpls;
pub mod linalg;
pub mod modelsel;
pub mod sensitivity;

pub use error::{KplsError, Result};
pub use intervals::{confidence_band, ConfidenceBand, SensitivityCache, SigmaDof};
pub use kernels::{KernelMatrix, KernelSpec};
pub use kpls::{fit, predict, Dataset, KplsModel, StopReason};
pub use linalg::{DenseMatrix, SymTridiagonal, UpperTriangular};
pub use modelsel::{select, SelectionGrid, SelectionReport};
pub use sensitivity::{dof_approx, dof_exact, DofReport, KrylovMoments};
