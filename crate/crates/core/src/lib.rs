//! Alzheimer's-vs-control slice classification with a from-scratch LeNet-5.
//!
//! The crate covers the whole pipeline: NIfTI-1 volumes are smoothed with a
//! millimetre-specified Gaussian, cut into axial slices, resampled to 28×28,
//! quantized to 8 bits and stored in a flat record file. A LeNet-5 trained with
//! momentum SGD and a step learning-rate policy classifies the slices.
//!
//! Per-sample work (batch forward/backward, per-volume preprocessing,
//! independent experiment runs) fans out over rayon when the `parallel`
//! feature is enabled. Reductions always run in a fixed order, so parallel
//! and sequential execution give bit-identical results.

// `!(x > 0.0)` is used on purpose throughout: it rejects NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod network;
pub mod par;
pub mod rng;
pub mod sgd;
pub mod tensor;
pub mod volume;

mod fnv;

pub use error::{Error, Result};
pub use fnv::fnv1a64;
pub use par::Execution;
pub use tensor::{Scalar, Tensor};
