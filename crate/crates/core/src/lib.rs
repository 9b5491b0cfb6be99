#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod error;
pub mod expr;
pub mod inclusion;
pub mod integrate;
pub mod relaxapprox;
pub mod sampling;
pub mod setgeom;
pub mod stability;

pub use error::{Error, Result};
