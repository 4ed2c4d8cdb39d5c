//! Helpers shared by the integration tests.
#![allow(dead_code)]

use derf_core::autodiff::{Tape, Var};

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut m = x.to_vec();
    p[i] += h;
    m[i] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}

/// `|a − b| / max(|a|, |b|, 1)`: relative above unit magnitude, absolute
/// below it.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Reverse-mode gradient of a function written against `Var`.
pub fn tape_gradient(f: &dyn for<'t> Fn(&[Var<'t>]) -> Var<'t>, x: &[f64]) -> (f64, Vec<f64>) {
    let tape = Tape::new();
    let vars = tape.leaves(x);
    let y = f(&vars);
    tape.check().expect("finite forward pass");
    let g = tape.backward(y).expect("backward");
    (y.value(), g.wrt_all(&vars))
}

/// Largest relative error between reverse-mode and finite-difference
/// gradients of `fv` (tape) / `ff` (plain `f64`).
pub fn max_gradient_error(
    fv: &dyn for<'t> Fn(&[Var<'t>]) -> Var<'t>,
    ff: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> f64 {
    let (_, g) = tape_gradient(fv, x);
    (0..x.len())
        .map(|i| rel_err(g[i], central_difference(ff, x, i, h)))
        .fold(0.0, f64::max)
}
