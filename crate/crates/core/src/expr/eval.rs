//! Pointwise and batched evaluation.
//!
//! Evaluation runs over "lanes": a batch of points evaluated together, one
//! `Vec<Complex64>` per DAG node, memoised by node address. Domain faults
//! (division by zero, `log 0`, non-finite results) are tracked per lane.

use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{CoefficientExpression, Func, Node, NodeRef};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogOfZero,
    NonFinite,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::LogOfZero => "logarithm of zero",
            EvalErrorKind::NonFinite => "non-finite value",
        })
    }
}

#[derive(Debug, Clone, Error)]
#[error("{kind} in `{subexpression}`")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub subexpression: String,
}

/// Reproducible sampling parameters for [`CoefficientExpression::approx_equal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            samples: 16,
            seed: 0x5eed_0f_9a1d,
            tol: 1e-9,
        }
    }
}

impl SampleSpec {
    pub fn with_tol(self, tol: f64) -> Self {
        SampleSpec { tol, ..self }
    }
}

/// Sample box for randomized comparisons: `[-2, 2]^N x [0, 1]`.
const SAMPLE_HALF_WIDTH: f64 = 2.0;

struct Lanes<'a> {
    coords: &'a [Vec<f64>],
    /// Either one time broadcast to every lane, or one per lane.
    times: &'a [f64],
    len: usize,
    memo: HashMap<usize, Rc<Vec<Complex64>>>,
    faulted: Vec<bool>,
    first_fault: Option<(EvalErrorKind, NodeRef)>,
}

impl<'a> Lanes<'a> {
    fn new(coords: &'a [Vec<f64>], times: &'a [f64], len: usize) -> Self {
        debug_assert!(times.len() == 1 || times.len() == len);
        Lanes {
            coords,
            times,
            len,
            memo: HashMap::new(),
            faulted: vec![false; len],
            first_fault: None,
        }
    }

    fn fault(&mut self, lane: usize, kind: EvalErrorKind, node: &NodeRef) {
        if !self.faulted[lane] {
            self.faulted[lane] = true;
            if self.first_fault.is_none() {
                self.first_fault = Some((kind, node.clone()));
            }
        }
    }

    fn eval(&mut self, n: &NodeRef) -> Rc<Vec<Complex64>> {
        let key = Arc::as_ptr(n) as usize;
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let len = self.len;
        let out: Vec<Complex64> = match &**n {
            Node::Const(c) => vec![*c; len],
            Node::Var(k) => self.coords[*k].iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            Node::Time => {
                if self.times.len() == 1 {
                    vec![Complex64::new(self.times[0], 0.0); len]
                } else {
                    self.times.iter().map(|&t| Complex64::new(t, 0.0)).collect()
                }
            }
            Node::Add(a, b) => zip(&self.eval(a), &self.eval(b), |x, y| x + y),
            Node::Sub(a, b) => zip(&self.eval(a), &self.eval(b), |x, y| x - y),
            Node::Mul(a, b) => zip(&self.eval(a), &self.eval(b), |x, y| x * y),
            Node::Neg(a) => self.eval(a).iter().map(|x| -x).collect(),
            Node::Div(a, b) => {
                let (va, vb) = (self.eval(a), self.eval(b));
                let mut out = Vec::with_capacity(len);
                for lane in 0..len {
                    if vb[lane] == Complex64::new(0.0, 0.0) {
                        self.fault(lane, EvalErrorKind::DivisionByZero, n);
                        out.push(Complex64::new(f64::NAN, f64::NAN));
                    } else {
                        out.push(super::complex_div(va[lane], vb[lane]));
                    }
                }
                out
            }
            Node::Pow(a, k) => {
                let va = self.eval(a);
                let mut out = Vec::with_capacity(len);
                for (lane, x) in va.iter().enumerate() {
                    if *k < 0 && *x == Complex64::new(0.0, 0.0) {
                        self.fault(lane, EvalErrorKind::DivisionByZero, n);
                        out.push(Complex64::new(f64::NAN, f64::NAN));
                    } else {
                        out.push(x.powi(*k));
                    }
                }
                out
            }
            Node::Call(f, a) => {
                let va = self.eval(a);
                let mut out = Vec::with_capacity(len);
                for (lane, x) in va.iter().enumerate() {
                    let v = match f {
                        Func::Exp => x.exp(),
                        Func::Sin => x.sin(),
                        Func::Cos => x.cos(),
                        Func::Sqrt => x.sqrt(),
                        Func::Conj => x.conj(),
                        Func::Log => {
                            if *x == Complex64::new(0.0, 0.0) {
                                self.fault(lane, EvalErrorKind::LogOfZero, n);
                                Complex64::new(f64::NAN, f64::NAN)
                            } else {
                                x.ln()
                            }
                        }
                    };
                    out.push(v);
                }
                out
            }
        };
        for (lane, v) in out.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                self.fault(lane, EvalErrorKind::NonFinite, n);
            }
        }
        let rc = Rc::new(out);
        self.memo.insert(key, rc.clone());
        rc
    }

    fn error(&self) -> Option<EvalError> {
        self.first_fault.as_ref().map(|(kind, node)| EvalError {
            kind: *kind,
            subexpression: CoefficientExpression::from_node(self.coords.len(), node.clone()).to_string(),
        })
    }
}

fn zip(a: &[Complex64], b: &[Complex64], f: impl Fn(Complex64, Complex64) -> Complex64) -> Vec<Complex64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

impl CoefficientExpression {
    /// Value at a single point `q` and time `t`.
    pub fn evaluate(&self, q: &[f64], t: f64) -> Result<Complex64> {
        check_dim(self.dim, q.len())?;
        let coords: Vec<Vec<f64>> = q.iter().map(|&x| vec![x]).collect();
        let v = self.eval_lanes(&coords, t, 1)?;
        Ok(v[0])
    }

    /// Values at `len` points given as per-axis coordinate columns
    /// (`coords[axis][point]`).
    pub fn eval_points(&self, coords: &[Vec<f64>], t: f64) -> Result<Vec<Complex64>> {
        check_dim(self.dim, coords.len())?;
        let len = coords.first().map_or(1, |c| c.len());
        if coords.iter().any(|c| c.len() != len) {
            return Err(Error::precondition("coordinate columns have unequal lengths"));
        }
        self.eval_lanes(coords, t, len)
    }

    fn eval_lanes(&self, coords: &[Vec<f64>], t: f64, len: usize) -> Result<Vec<Complex64>> {
        let times = [t];
        let mut lanes = Lanes::new(coords, &times, len);
        let v = lanes.eval(&self.root);
        match lanes.error() {
            Some(e) => Err(e.into()),
            None => Ok(Rc::try_unwrap(v).unwrap_or_else(|rc| (*rc).clone())),
        }
    }

    /// Randomized numerical equality: true iff `|a - b| <= tol (1 + |a| + |b|)`
    /// at `samples` points drawn reproducibly from `[-2,2]^N x [0,1]`. Points
    /// where either side faults are redrawn, up to ten times the requested
    /// number of draws.
    pub fn approx_equal(&self, other: &CoefficientExpression, spec: &SampleSpec) -> Result<bool> {
        check_dim(self.dim, other.dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut accepted = 0usize;
        let mut drawn = 0usize;
        let budget = spec.samples.max(1) * 10;
        while accepted < spec.samples {
            let batch = (spec.samples - accepted).min(budget - drawn);
            if batch == 0 {
                return Err(Error::Sampling(format!(
                    "only {accepted} of {} sample points were free of evaluation faults",
                    spec.samples
                )));
            }
            drawn += batch;
            let coords: Vec<Vec<f64>> = (0..self.dim)
                .map(|_| {
                    (0..batch)
                        .map(|_| rng.gen_range(-SAMPLE_HALF_WIDTH..SAMPLE_HALF_WIDTH))
                        .collect()
                })
                .collect();
            let t: Vec<f64> = (0..batch).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (a, a_bad) = self.eval_lanes_faulty(&coords, &t, batch);
            let (b, b_bad) = other.eval_lanes_faulty(&coords, &t, batch);
            for lane in 0..batch {
                if a_bad[lane] || b_bad[lane] {
                    continue;
                }
                let (x, y) = (a[lane], b[lane]);
                if (x - y).norm() > spec.tol * (1.0 + x.norm() + y.norm()) {
                    return Ok(false);
                }
                accepted += 1;
            }
        }
        Ok(true)
    }

    /// Numerically identically zero under `spec`.
    pub fn approx_zero(&self, spec: &SampleSpec) -> Result<bool> {
        if self.is_zero() {
            return Ok(true);
        }
        self.approx_equal(&CoefficientExpression::zero(self.dim), spec)
    }

    fn eval_lanes_faulty(&self, coords: &[Vec<f64>], times: &[f64], len: usize) -> (Rc<Vec<Complex64>>, Vec<bool>) {
        let mut lanes = Lanes::new(coords, times, len);
        let v = lanes.eval(&self.root);
        (v, lanes.faulted)
    }
}
