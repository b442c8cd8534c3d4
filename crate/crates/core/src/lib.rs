//! Quantized networked control of sampled nonlinear plants under
//! Denial-of-Service attacks.

// `!(x < y)` is used on purpose so that NaN fails every guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dos;
pub mod numerics;
pub mod plant;
pub mod quantizer;
pub mod simloop;
