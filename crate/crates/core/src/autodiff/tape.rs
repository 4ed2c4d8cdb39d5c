//! Wengert list of scalar nodes.
//!
//! Every node holds one `f64` forward value plus a rule describing its local
//! partials. Most nodes store their partials eagerly; `Dot` nodes keep a
//! deferred rule over two contiguous index ranges (weights and inputs), so a
//! dense layer costs no per-edge storage.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

const NO_BIAS: u32 = u32::MAX;

/// Primitive operations accepted by [`Tape::record`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Relu,
    /// `x^p` for a constant exponent.
    Pow(f64),
    /// `min(x, c)`.
    MinConst(f64),
    /// `max(x, c)`.
    MaxConst(f64),
}

impl Op {
    fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            _ => 1,
        }
    }
}

/// Node kind tag, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Relu,
    Pow,
    MinConst,
    MaxConst,
    Sqrt,
    Sigmoid,
    Softplus,
    Offset,
    Scale,
    Dot,
    LinComb,
    Copy,
    GradScale,
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    None,
    Unary {
        p: u32,
        d: f64,
    },
    Binary {
        a: u32,
        da: f64,
        b: u32,
        db: f64,
    },
    /// `bias + Σ w[i]·x[i]` with `w`, `x` contiguous ranges of length `len`.
    Dot {
        w: u32,
        x: u32,
        len: u32,
        bias: u32,
        w_grad: bool,
        x_grad: bool,
    },
    Edges {
        start: u32,
        end: u32,
    },
}

#[derive(Default)]
struct Inner {
    values: Vec<f64>,
    rules: Vec<Rule>,
    grad: Vec<bool>,
    kinds: Vec<OpKind>,
    edge_parent: Vec<u32>,
    edge_partial: Vec<f64>,
    fault: Option<Error>,
}

impl Inner {
    fn push(&mut self, kind: OpKind, value: f64, rule: Rule, grad: bool) -> u32 {
        let idx = self.values.len();
        if !value.is_finite() && self.fault.is_none() {
            self.fault = Some(Error::Numeric {
                node: idx,
                context: format!("{kind:?} produced {value}"),
            });
        }
        self.values.push(value);
        self.rules.push(if grad { rule } else { Rule::None });
        self.grad.push(grad);
        self.kinds.push(kind);
        idx as u32
    }

    fn fail(&mut self, err: Error) {
        if self.fault.is_none() {
            self.fault = Some(err);
        }
    }

    fn unary(&mut self, kind: OpKind, p: u32, value: f64, d: f64) -> u32 {
        let grad = self.grad[p as usize];
        self.push(kind, value, Rule::Unary { p, d }, grad)
    }

    fn binary(&mut self, kind: OpKind, a: u32, da: f64, b: u32, db: f64, value: f64) -> u32 {
        let (ga, gb) = (self.grad[a as usize], self.grad[b as usize]);
        let rule = match (ga, gb) {
            (true, true) => Rule::Binary { a, da, b, db },
            (true, false) => Rule::Unary { p: a, d: da },
            (false, true) => Rule::Unary { p: b, d: db },
            (false, false) => Rule::None,
        };
        self.push(kind, value, rule, ga || gb)
    }

    fn edges(&mut self, kind: OpKind, value: f64, edges: impl Iterator<Item = (u32, f64)>) -> u32 {
        let start = self.edge_parent.len();
        for (p, d) in edges {
            if self.grad[p as usize] {
                self.edge_parent.push(p);
                self.edge_partial.push(d);
            }
        }
        let end = self.edge_parent.len();
        let grad = end > start;
        self.push(
            kind,
            value,
            Rule::Edges {
                start: start as u32,
                end: end as u32,
            },
            grad,
        )
    }

    fn any_grad(&self, start: u32, len: u32) -> bool {
        self.grad[start as usize..(start + len) as usize]
            .iter()
            .any(|&g| g)
    }
}

/// Append-only scalar tape. Rebuilt (or [`Tape::clear`]ed) every step.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tape")
            .field("nodes", &inner.values.len())
            .field("edges", &inner.edge_parent.len())
            .field("fault", &inner.fault)
            .finish()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.value())
    }
}

impl PartialEq for Var<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.tape, other.tape) && self.idx == other.idx
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes but keep the allocations.
    pub fn clear(&self) {
        let mut t = self.inner.borrow_mut();
        t.values.clear();
        t.rules.clear();
        t.grad.clear();
        t.kinds.clear();
        t.edge_parent.clear();
        t.edge_partial.clear();
        t.fault = None;
    }

    /// First error recorded by an operator, if any.
    pub fn fault(&self) -> Option<Error> {
        self.inner.borrow().fault.clone()
    }

    pub fn check(&self) -> Result<()> {
        match self.fault() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn var(&self, idx: u32) -> Var<'_> {
        Var { tape: self, idx }
    }

    /// Differentiable input.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        let idx = self
            .inner
            .borrow_mut()
            .push(OpKind::Leaf, value, Rule::None, true);
        self.var(idx)
    }

    /// Contiguous block of differentiable inputs.
    pub fn leaves(&self, values: &[f64]) -> Vec<Var<'_>> {
        let mut t = self.inner.borrow_mut();
        let start = t.values.len() as u32;
        for &v in values {
            t.push(OpKind::Leaf, v, Rule::None, true);
        }
        drop(t);
        (0..values.len() as u32).map(|i| self.var(start + i)).collect()
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: f64) -> Var<'_> {
        let idx = self
            .inner
            .borrow_mut()
            .push(OpKind::Const, value, Rule::None, false);
        self.var(idx)
    }

    pub fn kind(&self, var: Var<'_>) -> OpKind {
        self.inner.borrow().kinds[var.idx as usize]
    }

    /// Record one primitive. Errors are returned immediately; the operator
    /// overloads on [`Var`] route through the same code but park the error
    /// on the tape instead.
    pub fn record<'t>(&'t self, op: Op, parents: &[Var<'t>]) -> Result<Var<'t>> {
        if parents.len() != op.arity() {
            return Err(Error::Invariant(format!(
                "{op:?} takes {} parents, got {}",
                op.arity(),
                parents.len()
            )));
        }
        for p in parents {
            if !std::ptr::eq(p.tape, self) || p.idx as usize >= self.len() {
                return Err(Error::Invariant(format!("{op:?}: parent not on this tape")));
            }
        }
        let out = self.apply(op, parents);
        self.check()?;
        Ok(out)
    }

    fn apply<'t>(&'t self, op: Op, p: &[Var<'t>]) -> Var<'t> {
        match op {
            Op::Add => p[0] + p[1],
            Op::Sub => p[0] - p[1],
            Op::Mul => p[0] * p[1],
            Op::Div => p[0] / p[1],
            Op::Neg => -p[0],
            Op::Exp => p[0].exp(),
            Op::Log => p[0].ln(),
            Op::Sin => p[0].sin(),
            Op::Cos => p[0].cos(),
            Op::Relu => p[0].relu(),
            Op::Pow(e) => p[0].powf(e),
            Op::MinConst(c) => p[0].min_const(c),
            Op::MaxConst(c) => p[0].max_const(c),
        }
    }

    /// Insert a gradient-scale node: forward value is the parent's value
    /// bit-for-bit, the adjoint reaching the parent is multiplied by
    /// `factor`.
    pub fn grad_scale<'t>(&'t self, node: Var<'t>, factor: f64) -> Result<Var<'t>> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(Error::Invariant(format!(
                "gradient scale factor {factor} outside [0, 1]"
            )));
        }
        Ok(node.grad_scale(factor))
    }

    /// Reverse sweep seeded with `d loss / d loss = 1`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        self.backward_seeded(&[(loss, 1.0)])
    }

    /// Reverse sweep with arbitrary output adjoints.
    pub fn backward_seeded(&self, seeds: &[(Var<'_>, f64)]) -> Result<Gradients> {
        self.check()?;
        let t = self.inner.borrow();
        let n = t.values.len();
        let mut adj = vec![0.0; n];
        let mut top = 0usize;
        for (v, s) in seeds {
            adj[v.idx as usize] += s;
            top = top.max(v.idx as usize + 1);
        }
        for i in (0..top).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            if !a.is_finite() {
                return Err(Error::Numeric {
                    node: i,
                    context: format!("adjoint {a} at {:?} node", t.kinds[i]),
                });
            }
            match t.rules[i] {
                Rule::None => {}
                Rule::Unary { p, d } => adj[p as usize] += d * a,
                Rule::Binary { a: pa, da, b: pb, db } => {
                    adj[pa as usize] += da * a;
                    adj[pb as usize] += db * a;
                }
                Rule::Dot {
                    w,
                    x,
                    len,
                    bias,
                    w_grad,
                    x_grad,
                } => {
                    let (w, x, len) = (w as usize, x as usize, len as usize);
                    if w_grad {
                        for k in 0..len {
                            adj[w + k] += t.values[x + k] * a;
                        }
                    }
                    if x_grad {
                        for k in 0..len {
                            adj[x + k] += t.values[w + k] * a;
                        }
                    }
                    if bias != NO_BIAS && t.grad[bias as usize] {
                        adj[bias as usize] += a;
                    }
                }
                Rule::Edges { start, end } => {
                    for e in start as usize..end as usize {
                        adj[t.edge_parent[e] as usize] += t.edge_partial[e] * a;
                    }
                }
            }
        }
        Ok(Gradients { adj })
    }

    pub(crate) fn value_of(&self, idx: u32) -> f64 {
        self.inner.borrow().values[idx as usize]
    }

    pub(crate) fn push_unary(&self, kind: OpKind, p: u32, value: f64, d: f64) -> u32 {
        self.inner.borrow_mut().unary(kind, p, value, d)
    }

    pub(crate) fn fail(&self, err: Error) {
        self.inner.borrow_mut().fail(err);
    }

    /// `bias + Σ w·x`. Contiguous operands use the deferred `Dot` rule;
    /// anything else falls back to explicit edges.
    pub(crate) fn affine<'t>(&'t self, bias: Option<Var<'t>>, w: &[Var<'t>], x: &[Var<'t>]) -> Var<'t> {
        assert_eq!(w.len(), x.len(), "affine: length mismatch");
        let mut t = self.inner.borrow_mut();
        let mut acc = 0.0;
        for (wi, xi) in w.iter().zip(x) {
            acc += t.values[wi.idx as usize] * t.values[xi.idx as usize];
        }
        let value = match bias {
            Some(b) => acc + t.values[b.idx as usize],
            None => acc,
        };
        let idx = if !w.is_empty() && contiguous(w) && contiguous(x) {
            let len = w.len() as u32;
            let (ws, xs) = (w[0].idx, x[0].idx);
            let w_grad = t.any_grad(ws, len);
            let x_grad = t.any_grad(xs, len);
            let b_grad = bias.is_some_and(|b| t.grad[b.idx as usize]);
            let rule = Rule::Dot {
                w: ws,
                x: xs,
                len,
                bias: bias.map_or(NO_BIAS, |b| b.idx),
                w_grad,
                x_grad,
            };
            t.push(OpKind::Dot, value, rule, w_grad || x_grad || b_grad)
        } else {
            let vals: Vec<(u32, f64)> = w
                .iter()
                .zip(x)
                .flat_map(|(wi, xi)| {
                    let (vw, vx) = (t.values[wi.idx as usize], t.values[xi.idx as usize]);
                    [(wi.idx, vx), (xi.idx, vw)]
                })
                .chain(bias.map(|b| (b.idx, 1.0)))
                .collect();
            t.edges(OpKind::Dot, value, vals.into_iter())
        };
        drop(t);
        self.var(idx)
    }

    pub(crate) fn lincomb<'t>(&'t self, coeffs: &[f64], x: &[Var<'t>]) -> Var<'t> {
        assert_eq!(coeffs.len(), x.len(), "lincomb: length mismatch");
        let mut t = self.inner.borrow_mut();
        let mut acc = 0.0;
        for (c, xi) in coeffs.iter().zip(x) {
            acc += c * t.values[xi.idx as usize];
        }
        let edges: Vec<(u32, f64)> = x.iter().zip(coeffs).map(|(xi, &c)| (xi.idx, c)).collect();
        let idx = t.edges(OpKind::LinComb, acc, edges.into_iter());
        drop(t);
        self.var(idx)
    }

    /// Copy `x` into a contiguous block (no-op when it already is one).
    pub(crate) fn gather<'t>(&'t self, x: &[Var<'t>]) -> Vec<Var<'t>> {
        if contiguous(x) {
            return x.to_vec();
        }
        let mut t = self.inner.borrow_mut();
        let out: Vec<u32> = x
            .iter()
            .map(|xi| {
                let v = t.values[xi.idx as usize];
                t.unary(OpKind::Copy, xi.idx, v, 1.0)
            })
            .collect();
        drop(t);
        out.into_iter().map(|i| self.var(i)).collect()
    }
}

fn contiguous(x: &[Var<'_>]) -> bool {
    x.windows(2).all(|p| p[1].idx == p[0].idx + 1)
}

/// Adjoints from one reverse sweep, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, var: Var<'_>) -> f64 {
        self.adj.get(var.idx as usize).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.wrt(*v)).collect()
    }

    /// Accumulate the adjoints of a contiguous leaf block into `out`.
    pub fn accumulate_into(&self, first: Var<'_>, out: &mut [f64]) {
        let s = first.idx as usize;
        let n = out.len();
        for (o, a) in out.iter_mut().zip(&self.adj[s..s + n]) {
            *o += a;
        }
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.value_of(self.idx)
    }

    pub fn index(&self) -> usize {
        self.idx as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn un(self, kind: OpKind, value: f64, d: f64) -> Self {
        let idx = self.tape.push_unary(kind, self.idx, value, d);
        self.tape.var(idx)
    }

    fn bin(self, other: Self, kind: OpKind, value: f64, da: f64, db: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
        let idx = self
            .tape
            .inner
            .borrow_mut()
            .binary(kind, self.idx, da, other.idx, db, value);
        self.tape.var(idx)
    }

    fn domain(self, kind: OpKind, op: &'static str, detail: String) -> Self {
        self.tape.fail(Error::Domain { op, detail });
        self.un(kind, f64::NAN, 0.0)
    }

    pub fn exp(self) -> Self {
        let v = self.value().exp();
        self.un(OpKind::Exp, v, v)
    }

    pub fn ln(self) -> Self {
        let x = self.value();
        if x <= 0.0 {
            return self.domain(OpKind::Log, "log", format!("argument {x} <= 0"));
        }
        self.un(OpKind::Log, x.ln(), 1.0 / x)
    }

    pub fn sin(self) -> Self {
        let x = self.value();
        self.un(OpKind::Sin, x.sin(), x.cos())
    }

    pub fn cos(self) -> Self {
        let x = self.value();
        self.un(OpKind::Cos, x.cos(), -x.sin())
    }

    pub fn sqrt(self) -> Self {
        let x = self.value();
        if x < 0.0 {
            return self.domain(OpKind::Sqrt, "sqrt", format!("argument {x} < 0"));
        }
        let s = x.sqrt();
        self.un(OpKind::Sqrt, s, 0.5 / s)
    }

    pub fn relu(self) -> Self {
        let x = self.value();
        if x > 0.0 {
            self.un(OpKind::Relu, x, 1.0)
        } else {
            self.un(OpKind::Relu, 0.0, 0.0)
        }
    }

    pub fn sigmoid(self) -> Self {
        let s = super::scalar::sigmoid(self.value());
        self.un(OpKind::Sigmoid, s, s * (1.0 - s))
    }

    pub fn softplus(self) -> Self {
        let x = self.value();
        self.un(
            OpKind::Softplus,
            super::scalar::softplus(x),
            super::scalar::sigmoid(x),
        )
    }

    pub fn powf(self, p: f64) -> Self {
        let x = self.value();
        if x < 0.0 && p.fract() != 0.0 {
            return self.domain(OpKind::Pow, "pow", format!("negative base {x} with exponent {p}"));
        }
        if x == 0.0 && p < 0.0 {
            return self.domain(OpKind::Pow, "pow", format!("zero base with exponent {p}"));
        }
        let d = if p == 0.0 { 0.0 } else { p * x.powf(p - 1.0) };
        self.un(OpKind::Pow, x.powf(p), d)
    }

    pub fn min_const(self, c: f64) -> Self {
        let x = self.value();
        if x <= c {
            self.un(OpKind::MinConst, x, 1.0)
        } else {
            self.un(OpKind::MinConst, c, 0.0)
        }
    }

    pub fn max_const(self, c: f64) -> Self {
        let x = self.value();
        if x >= c {
            self.un(OpKind::MaxConst, x, 1.0)
        } else {
            self.un(OpKind::MaxConst, c, 0.0)
        }
    }

    /// Forward identity; backward multiplies the adjoint by `factor`.
    /// Out-of-range factors are parked on the tape as an invariant error.
    pub fn grad_scale(self, factor: f64) -> Self {
        if !(0.0..=1.0).contains(&factor) {
            self.tape.fail(Error::Invariant(format!(
                "gradient scale factor {factor} outside [0, 1]"
            )));
        }
        let v = self.value();
        self.un(OpKind::GradScale, v, factor)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        let v = self.value() + rhs.value();
        self.bin(rhs, OpKind::Add, v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        let v = self.value() - rhs.value();
        self.bin(rhs, OpKind::Sub, v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self.value(), rhs.value());
        self.bin(rhs, OpKind::Mul, a * b, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let (a, b) = (self.value(), rhs.value());
        if b == 0.0 {
            return self.domain(OpKind::Div, "div", "division by zero".into());
        }
        self.bin(rhs, OpKind::Div, a / b, 1.0 / b, -a / (b * b))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        let v = -self.value();
        self.un(OpKind::Neg, v, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Self {
        let v = self.value() + c;
        self.un(OpKind::Offset, v, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Self {
        let v = self.value() - c;
        self.un(OpKind::Offset, v, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Self {
        let v = self.value() * c;
        self.un(OpKind::Scale, v, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Self {
        if c == 0.0 {
            return self.domain(OpKind::Div, "div", "division by zero".into());
        }
        let v = self.value() / c;
        self.un(OpKind::Scale, v, 1.0 / c)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, x: Var<'t>) -> Var<'t> {
        x + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, x: Var<'t>) -> Var<'t> {
        let v = self - x.value();
        x.un(OpKind::Offset, v, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, x: Var<'t>) -> Var<'t> {
        x * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, x: Var<'t>) -> Var<'t> {
        let b = x.value();
        if b == 0.0 {
            return x.domain(OpKind::Div, "div", "division by zero".into());
        }
        x.un(OpKind::Div, self / b, -self / (b * b))
    }
}
