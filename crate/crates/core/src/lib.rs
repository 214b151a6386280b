// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod compfunc;
pub mod config;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod lyap_linear;
pub mod sampling;
pub mod semigroup;
pub mod wurs;

pub use error::{Error, Result};
