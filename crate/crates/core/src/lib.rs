//! Reconstruction of a Schrödinger potential on `[0, 1]` from the boundary
//! traces of a single wave field.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod mode_extract;
pub mod norming;
pub mod pipeline;
pub mod reconstruct;
pub mod sl_forward;
pub mod smoothing;
pub mod source_recover;
pub mod trace_sim;

pub use error::{Error, Result};
