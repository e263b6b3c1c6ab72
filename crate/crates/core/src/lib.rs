#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod error;
pub mod grid;
pub mod potential;
pub mod quad;
pub mod resolvent;
pub mod scattering;
pub mod semigroup;
pub mod wavelab;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
