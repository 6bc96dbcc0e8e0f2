//! Secure multi-observer state estimation for sampled, sector-bounded Lur'e
//! systems under sensor attacks.
//!
//! The crate is `no_std` with `alloc`; file formats and the command line live
//! in the `sse` companion crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channel;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod lmi;
pub mod lure;
pub mod lyapunov;
pub mod observer;
pub mod sdp;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
