#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxiliary;
pub mod error;
pub mod generators;
pub mod grid;
pub mod hermlin;
pub mod krylov;
pub mod sampling;
pub mod solver;
pub mod sweep;
pub mod symfun;

pub use error::{Error, Result};
