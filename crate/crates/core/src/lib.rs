//! Finite-stage construction of a smooth degree-one circle map with a flat
//! interval and a wandering interval, together with first-return proxies for
//! the associated Cherry flow.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cherry;
pub mod circle;
pub mod construction;
pub mod error;
pub mod expr;
pub mod perturbation;
pub mod rotation;

pub use circle::{IntervalOnCircle, MapDescriptor, Piece, Side};
pub use error::{Error, Result};
pub use expr::PrimitiveExpr;
