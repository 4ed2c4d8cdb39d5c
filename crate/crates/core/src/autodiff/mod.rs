//! Reverse-mode automatic differentiation over scalars.
//!
//! The tape is define-by-run: callers rebuild it each step. Besides the usual
//! primitives it offers a gradient-scale node whose forward value is its
//! parent's value and whose backward pass multiplies the adjoint by a factor
//! in `[0, 1]`.

mod real;
pub mod scalar;
mod tape;

pub use real::Real;
pub use tape::{Gradients, Op, OpKind, Tape, Var};
