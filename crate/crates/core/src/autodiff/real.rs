use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar;
use super::tape::Var;

/// Scalar arithmetic shared by the plain `f64` path (evaluation, synthetic
/// scene generation) and the taped [`Var`] path (training).
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living in the same context as `self`.
    fn lift(self, v: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn relu(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn min_const(self, c: f64) -> Self;
    fn max_const(self, c: f64) -> Self;
    fn grad_scale(self, factor: f64) -> Self;
    /// `bias + Σ w[i]·x[i]`.
    fn affine(bias: Option<Self>, w: &[Self], x: &[Self]) -> Self;
    /// `Σ c[i]·x[i]` with constant coefficients.
    fn lincomb(coeffs: &[f64], x: &[Self]) -> Self;
    /// Contiguous copy of `x`, so repeated `affine` calls stay cheap.
    fn gather(x: &[Self]) -> Vec<Self>;

    fn square(self) -> Self {
        self * self
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        Self::affine(None, a, b)
    }

    fn sum(x: &[Self]) -> Self {
        let ones = vec![1.0; x.len()];
        Self::lincomb(&ones, x)
    }
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, v: f64) -> Self {
        v
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    fn sigmoid(self) -> Self {
        scalar::sigmoid(self)
    }
    fn softplus(self) -> Self {
        scalar::softplus(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn min_const(self, c: f64) -> Self {
        if self <= c {
            self
        } else {
            c
        }
    }
    fn max_const(self, c: f64) -> Self {
        if self >= c {
            self
        } else {
            c
        }
    }
    fn grad_scale(self, _factor: f64) -> Self {
        self
    }
    fn affine(bias: Option<Self>, w: &[Self], x: &[Self]) -> Self {
        debug_assert_eq!(w.len(), x.len());
        let mut acc = 0.0;
        for (a, b) in w.iter().zip(x) {
            acc += a * b;
        }
        match bias {
            Some(b) => acc + b,
            None => acc,
        }
    }
    fn lincomb(coeffs: &[f64], x: &[Self]) -> Self {
        let mut acc = 0.0;
        for (c, v) in coeffs.iter().zip(x) {
            acc += c * v;
        }
        acc
    }
    fn gather(x: &[Self]) -> Vec<Self> {
        x.to_vec()
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        Var::value(&self)
    }
    fn lift(self, v: f64) -> Self {
        self.tape().constant(v)
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn sin(self) -> Self {
        Var::sin(self)
    }
    fn cos(self) -> Self {
        Var::cos(self)
    }
    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }
    fn relu(self) -> Self {
        Var::relu(self)
    }
    fn sigmoid(self) -> Self {
        Var::sigmoid(self)
    }
    fn softplus(self) -> Self {
        Var::softplus(self)
    }
    fn powf(self, p: f64) -> Self {
        Var::powf(self, p)
    }
    fn min_const(self, c: f64) -> Self {
        Var::min_const(self, c)
    }
    fn max_const(self, c: f64) -> Self {
        Var::max_const(self, c)
    }
    fn grad_scale(self, factor: f64) -> Self {
        Var::grad_scale(self, factor)
    }
    fn affine(bias: Option<Self>, w: &[Self], x: &[Self]) -> Self {
        let tape = bias.or_else(|| w.first().copied()).map(|v| v.tape());
        match tape {
            Some(t) => t.affine(bias, w, x),
            None => panic!("affine on an empty operand list needs a bias"),
        }
    }
    fn lincomb(coeffs: &[f64], x: &[Self]) -> Self {
        x.first()
            .expect("lincomb on an empty operand list")
            .tape()
            .lincomb(coeffs, x)
    }
    fn gather(x: &[Self]) -> Vec<Self> {
        match x.first() {
            Some(v) => v.tape().gather(x),
            None => Vec::new(),
        }
    }
}
