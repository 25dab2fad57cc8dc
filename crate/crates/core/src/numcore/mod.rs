//! Dense numeric kernels, parameter storage, the optimizer, clipping,
//! dropout, and finite-difference gradient verification.

mod adam;
mod check;
mod dropout;
mod matrix;
mod softmax;
mod store;

pub use adam::{adam_step, AdamState};
pub use check::finite_diff_check;
pub use dropout::dropout_mask;
pub use matrix::Matrix;
pub use softmax::masked_softmax;
pub use store::{clip_frobenius, renorm_weights_frobenius, GradientSet, ParamStore};

pub(crate) use matrix::{axpy, dot};
