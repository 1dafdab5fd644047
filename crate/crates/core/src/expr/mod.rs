//! Complex-valued coefficient expressions in `q1..qN` and `t`.
//!
//! Expressions are immutable DAGs of [`Node`]s behind `Arc`; differentiation
//! reuses unchanged subtrees, so `d/dq exp(g)` shares the `exp(g)` node with
//! its input. Construction goes through smart constructors that apply light
//! simplification (`0*x -> 0`, `x+0 -> x`, `1*x -> x`, constant folding) and
//! nothing more. Equality between expressions is decided numerically, see
//! [`CoefficientExpression::approx_equal`].

mod diff;
mod eval;
mod latex;
mod parse;

use std::fmt;
use std::ops;
use std::sync::Arc;

use num_complex::Complex64;

pub use eval::{EvalError, EvalErrorKind, SampleSpec};
pub use parse::{ParseError, ParseErrorKind};

use crate::error::{check_dim, Result};
use crate::multiindex::MultiIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Log,
    Sqrt,
    /// Complex conjugate. Not part of the user grammar's required set, but
    /// needed to conjugate `log`/`sqrt` exactly on their branch cuts.
    Conj,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Conj => "conj",
        }
    }

    pub(super) fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "conj" => Func::Conj,
            _ => return None,
        })
    }
}

#[derive(Debug)]
pub enum Node {
    Const(Complex64),
    /// 0-based coordinate index.
    Var(usize),
    Time,
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Neg(Arc<Node>),
    Pow(Arc<Node>, i32),
    Call(Func, Arc<Node>),
}

pub(crate) type NodeRef = Arc<Node>;

pub(crate) fn constant(c: Complex64) -> NodeRef {
    Arc::new(Node::Const(c))
}

pub(crate) fn as_const(n: &Node) -> Option<Complex64> {
    match n {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

fn is_zero_node(n: &Node) -> bool {
    as_const(n).is_some_and(|c| c == Complex64::new(0.0, 0.0))
}

fn is_one_node(n: &Node) -> bool {
    as_const(n).is_some_and(|c| c == Complex64::new(1.0, 0.0))
}

pub(crate) fn zero() -> NodeRef {
    constant(Complex64::new(0.0, 0.0))
}

pub(crate) fn one() -> NodeRef {
    constant(Complex64::new(1.0, 0.0))
}

pub(crate) fn add(a: NodeRef, b: NodeRef) -> NodeRef {
    if is_zero_node(&a) {
        return b;
    }
    if is_zero_node(&b) {
        return a;
    }
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => constant(x + y),
        _ => match &*b {
            Node::Neg(inner) => Arc::new(Node::Sub(a, inner.clone())),
            _ => Arc::new(Node::Add(a, b)),
        },
    }
}

pub(crate) fn sub(a: NodeRef, b: NodeRef) -> NodeRef {
    if is_zero_node(&b) {
        return a;
    }
    if is_zero_node(&a) {
        return neg(b);
    }
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => constant(x - y),
        _ => match &*b {
            Node::Neg(inner) => Arc::new(Node::Add(a, inner.clone())),
            _ => Arc::new(Node::Sub(a, b)),
        },
    }
}

pub(crate) fn neg(a: NodeRef) -> NodeRef {
    match &*a {
        Node::Const(c) => constant(-c),
        Node::Neg(inner) => inner.clone(),
        Node::Mul(l, r) => match as_const(l) {
            Some(c) => mul(constant(-c), r.clone()),
            None => Arc::new(Node::Neg(a)),
        },
        _ => Arc::new(Node::Neg(a)),
    }
}

pub(crate) fn mul(a: NodeRef, b: NodeRef) -> NodeRef {
    if is_zero_node(&a) || is_zero_node(&b) {
        return zero();
    }
    if is_one_node(&a) {
        return b;
    }
    if is_one_node(&b) {
        return a;
    }
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => constant(x * y),
        (None, Some(_)) => mul(b, a),
        (Some(x), None) => {
            if x == Complex64::new(-1.0, 0.0) {
                return neg(b);
            }
            match &*b {
                Node::Mul(l, r) => match as_const(l) {
                    Some(y) => mul(constant(x * y), r.clone()),
                    None => Arc::new(Node::Mul(a, b)),
                },
                Node::Neg(inner) => mul(constant(-x), inner.clone()),
                _ => Arc::new(Node::Mul(a, b)),
            }
        }
        (None, None) => Arc::new(Node::Mul(a, b)),
    }
}

/// Complex division that is correctly rounded for real divisors.
pub(crate) fn complex_div(x: Complex64, y: Complex64) -> Complex64 {
    if y.im == 0.0 {
        Complex64::new(x.re / y.re, x.im / y.re)
    } else {
        x / y
    }
}

pub(crate) fn div(a: NodeRef, b: NodeRef) -> NodeRef {
    if is_zero_node(&a) {
        return zero();
    }
    if is_one_node(&b) {
        return a;
    }
    match (as_const(&a), as_const(&b)) {
        // a zero constant denominator is kept so evaluation can report it
        (Some(x), Some(y)) if y != Complex64::new(0.0, 0.0) => constant(complex_div(x, y)),
        (None, Some(y)) if y != Complex64::new(0.0, 0.0) => mul(constant(complex_div(Complex64::new(1.0, 0.0), y)), a),
        _ => Arc::new(Node::Div(a, b)),
    }
}

pub(crate) fn pow(a: NodeRef, n: i32) -> NodeRef {
    if n == 0 {
        return one();
    }
    if n == 1 {
        return a;
    }
    match as_const(&a) {
        Some(c) if n > 0 || c != Complex64::new(0.0, 0.0) => constant(c.powi(n)),
        _ => Arc::new(Node::Pow(a, n)),
    }
}

pub(crate) fn call(f: Func, a: NodeRef) -> NodeRef {
    if let Some(c) = as_const(&a) {
        let folded = match f {
            Func::Exp => Some(c.exp()),
            Func::Sin => Some(c.sin()),
            Func::Cos => Some(c.cos()),
            Func::Sqrt => Some(c.sqrt()),
            Func::Conj => Some(c.conj()),
            // log(0) stays symbolic so evaluation reports the fault
            Func::Log if c != Complex64::new(0.0, 0.0) => Some(c.ln()),
            Func::Log => None,
        };
        if let Some(v) = folded {
            if v.re.is_finite() && v.im.is_finite() {
                return constant(v);
            }
        }
    }
    if f == Func::Conj {
        return conj_node(&a);
    }
    Arc::new(Node::Call(f, a))
}

/// Symbolic complex conjugate. Coordinates and `t` are real, so conjugation
/// distributes over arithmetic and the entire functions; `log` and `sqrt`
/// are wrapped instead because their principal branches are not
/// conjugation-symmetric on the negative real axis.
pub(crate) fn conj_node(a: &NodeRef) -> NodeRef {
    match &**a {
        Node::Const(c) => constant(c.conj()),
        Node::Var(_) | Node::Time => a.clone(),
        Node::Add(l, r) => add(conj_node(l), conj_node(r)),
        Node::Sub(l, r) => sub(conj_node(l), conj_node(r)),
        Node::Mul(l, r) => mul(conj_node(l), conj_node(r)),
        Node::Div(l, r) => div(conj_node(l), conj_node(r)),
        Node::Neg(x) => neg(conj_node(x)),
        Node::Pow(x, n) => pow(conj_node(x), *n),
        Node::Call(f @ (Func::Exp | Func::Sin | Func::Cos), x) => call(*f, conj_node(x)),
        Node::Call(Func::Conj, x) => x.clone(),
        Node::Call(Func::Log | Func::Sqrt, _) => Arc::new(Node::Call(Func::Conj, a.clone())),
    }
}

fn depends_on_time(n: &Node) -> bool {
    match n {
        Node::Time => true,
        Node::Const(_) | Node::Var(_) => false,
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            depends_on_time(a) || depends_on_time(b)
        }
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => depends_on_time(a),
    }
}

fn max_var(n: &Node) -> Option<usize> {
    match n {
        Node::Var(k) => Some(*k),
        Node::Const(_) | Node::Time => None,
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            max_var(a).max(max_var(b))
        }
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => max_var(a),
    }
}

/// A parsed coefficient function `h(q, t)` over an `N`-dimensional
/// configuration space.
#[derive(Clone)]
pub struct CoefficientExpression {
    dim: usize,
    root: NodeRef,
}

impl CoefficientExpression {
    pub fn parse(text: &str, dim: usize) -> std::result::Result<Self, ParseError> {
        let root = parse::parse(text, dim)?;
        Ok(CoefficientExpression { dim, root })
    }

    pub(crate) fn from_node(dim: usize, root: NodeRef) -> Self {
        debug_assert!(max_var(&root).map_or(true, |k| k < dim));
        CoefficientExpression { dim, root }
    }

    pub fn constant(c: Complex64, dim: usize) -> Self {
        Self::from_node(dim, constant(c))
    }

    pub fn real(x: f64, dim: usize) -> Self {
        Self::constant(Complex64::new(x, 0.0), dim)
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_node(dim, zero())
    }

    /// The coordinate `q_{axis+1}`.
    pub fn variable(axis: usize, dim: usize) -> Self {
        assert!(axis < dim);
        Self::from_node(dim, Arc::new(Node::Var(axis)))
    }

    pub fn time(dim: usize) -> Self {
        Self::from_node(dim, Arc::new(Node::Time))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Structurally zero (after simplification); see `approx_equal` for the
    /// numerical test.
    pub fn is_zero(&self) -> bool {
        is_zero_node(&self.root)
    }

    pub fn as_constant(&self) -> Option<Complex64> {
        as_const(&self.root)
    }

    pub fn depends_on_time(&self) -> bool {
        depends_on_time(&self.root)
    }

    pub fn conj(&self) -> Self {
        Self::from_node(self.dim, conj_node(&self.root))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_node(self.dim, mul(constant(c), self.root.clone()))
    }

    pub fn pow(&self, n: i32) -> Self {
        Self::from_node(self.dim, pow(self.root.clone(), n))
    }

    pub fn apply(&self, f: Func) -> Self {
        Self::from_node(self.dim, call(f, self.root.clone()))
    }

    /// `d/dq_{axis+1}`; `t` is a parameter.
    pub fn partial(&self, axis: usize) -> Self {
        assert!(axis < self.dim, "axis {axis} out of range");
        Self::from_node(self.dim, diff::partial(&self.root, axis))
    }

    /// The mixed partial `D^n`.
    pub fn differentiate(&self, n: &MultiIndex) -> Result<Self> {
        check_dim(self.dim, n.dim())?;
        let mut root = self.root.clone();
        for (axis, &k) in n.entries().iter().enumerate() {
            for _ in 0..k {
                root = diff::partial(&root, axis);
            }
        }
        Ok(Self::from_node(self.dim, root))
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        fn walk(n: &NodeRef, seen: &mut std::collections::HashSet<usize>) {
            if !seen.insert(Arc::as_ptr(n) as usize) {
                return;
            }
            match &**n {
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a, seen);
                    walk(b, seen);
                }
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => walk(a, seen),
                _ => {}
            }
        }
        walk(&self.root, &mut seen);
        seen.len()
    }

    pub fn to_latex(&self) -> String {
        latex::to_latex(&self.root)
    }
}

impl fmt::Display for CoefficientExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        parse::write_node(f, &self.root)
    }
}

impl fmt::Debug for CoefficientExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientExpression[N={}]({})", self.dim, self)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $ctor:ident) => {
        impl ops::$trait<&CoefficientExpression> for &CoefficientExpression {
            type Output = CoefficientExpression;
            fn $method(self, rhs: &CoefficientExpression) -> CoefficientExpression {
                assert_eq!(self.dim, rhs.dim, "dimension mismatch in expression arithmetic");
                CoefficientExpression::from_node(self.dim, $ctor(self.root.clone(), rhs.root.clone()))
            }
        }
        impl ops::$trait for CoefficientExpression {
            type Output = CoefficientExpression;
            fn $method(self, rhs: CoefficientExpression) -> CoefficientExpression {
                (&self).$method(&rhs)
            }
        }
    };
}

binop!(Add, add, add);
binop!(Sub, sub, sub);
binop!(Mul, mul, mul);
binop!(Div, div, div);

impl ops::Neg for &CoefficientExpression {
    type Output = CoefficientExpression;
    fn neg(self) -> CoefficientExpression {
        CoefficientExpression::from_node(self.dim, neg(self.root.clone()))
    }
}

impl ops::Neg for CoefficientExpression {
    type Output = CoefficientExpression;
    fn neg(self) -> CoefficientExpression {
        -&self
    }
}
