//! Cross-subject transfer for wearable-sensor activity recognition.
//!
//! A generator maps labeled source-subject windows into the target
//! subject's feature distribution, a discriminator separates generated from
//! real target windows, and a classifier learns from source and generated
//! windows. The classifier is the deliverable; it is then applied to the
//! unlabeled target subject.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the tensor layouts in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod distance;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
