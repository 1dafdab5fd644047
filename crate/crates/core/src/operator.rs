//! Differential-operator Hamiltonians `H = Σ h_n(q,t) D^n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::expr::{CoefficientExpression, SampleSpec};
use crate::grid::{Grid, GridState};
use crate::multiindex::{binomial_multi, MultiIndex};

/// Fewest points per axis accepted by [`DifferentialOperator::apply`].
pub const MIN_POINTS_PER_AXIS: usize = 16;

#[derive(Clone, Debug)]
pub struct DifferentialOperator {
    dim: usize,
    terms: BTreeMap<MultiIndex, CoefficientExpression>,
}

fn prunable(e: &CoefficientExpression) -> bool {
    // an expression that faults on every sample is kept rather than guessed at
    e.is_zero() || e.approx_zero(&SampleSpec::default()).unwrap_or(false)
}

impl DifferentialOperator {
    pub fn zero(dim: usize) -> Self {
        DifferentialOperator { dim, terms: BTreeMap::new() }
    }

    /// Builds from `(n, h_n)` pairs, summing repeated indices and pruning zeros.
    pub fn from_terms(
        dim: usize,
        terms: impl IntoIterator<Item = (MultiIndex, CoefficientExpression)>,
    ) -> Result<Self> {
        let mut op = DifferentialOperator::zero(dim);
        for (n, h) in terms {
            op.add_term(n, h)?;
        }
        Ok(op)
    }

    /// Parses `(multi-index literal, expression)` pairs.
    pub fn from_strs(dim: usize, terms: &[(&str, &str)]) -> Result<Self> {
        let mut parsed = Vec::with_capacity(terms.len());
        for (n, h) in terms {
            let n: MultiIndex = n.parse().map_err(|e: String| Error::format(1, e))?;
            parsed.push((n, CoefficientExpression::parse(h, dim)?));
        }
        Self::from_terms(dim, parsed)
    }

    pub fn add_term(&mut self, n: MultiIndex, h: CoefficientExpression) -> Result<()> {
        check_dim(self.dim, n.dim())?;
        check_dim(self.dim, h.dim())?;
        let sum = match self.terms.remove(&n) {
            Some(old) => &old + &h,
            None => h,
        };
        if !prunable(&sum) {
            self.terms.insert(n, sum);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, CoefficientExpression> {
        &self.terms
    }

    pub fn coefficient(&self, n: &MultiIndex) -> Option<&CoefficientExpression> {
        self.terms.get(n)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_order(&self) -> u32 {
        self.terms.keys().map(MultiIndex::order).max().unwrap_or(0)
    }

    pub fn depends_on_time(&self) -> bool {
        self.terms.values().any(CoefficientExpression::depends_on_time)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let terms = self.terms.iter().map(|(n, h)| (n.clone(), h.scale(c)));
        Self::from_terms(self.dim, terms).expect("dimensions already checked")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut out = self.clone();
        for (n, h) in &other.terms {
            out.add_term(n.clone(), h.clone())?;
        }
        Ok(out)
    }

    /// Formal adjoint: `h†_n = Σ_{m ≥ n} (-1)^{|m|} C(m,n) D^{m-n} conj(h_m)`.
    pub fn adjoint(&self) -> Self {
        let mut acc: BTreeMap<MultiIndex, CoefficientExpression> = BTreeMap::new();
        for (m, h) in &self.terms {
            let hc = h.conj();
            let sign = f64::from(m.parity_sign());
            for n in m.lower_set() {
                let diff = m.checked_sub(&n).expect("n in lower set");
                let c = binomial_multi(m, &n).expect("same dimension");
                let w = sign * crate::multiindex::bigint_to_f64(&c);
                let term = hc.differentiate(&diff).expect("same dimension").scale(Complex64::new(w, 0.0));
                if term.is_zero() {
                    continue;
                }
                let slot = acc.entry(n).or_insert_with(|| CoefficientExpression::zero(self.dim));
                *slot = &*slot + &term;
            }
        }
        Self::from_terms(self.dim, acc).expect("dimensions already checked")
    }

    /// Slots `n` where `h_n` and `h†_n` differ under `approx_equal`.
    pub fn hermiticity_violations(&self, spec: &SampleSpec) -> Result<Vec<MultiIndex>> {
        let adj = self.adjoint();
        let zero = CoefficientExpression::zero(self.dim);
        let mut keys: Vec<&MultiIndex> = self.terms.keys().chain(adj.terms.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut bad = Vec::new();
        for n in keys {
            let a = self.terms.get(n).unwrap_or(&zero);
            let b = adj.terms.get(n).unwrap_or(&zero);
            if !a.approx_equal(b, spec)? {
                bad.push(n.clone());
            }
        }
        Ok(bad)
    }

    pub fn is_hermitian(&self, spec: &SampleSpec) -> Result<bool> {
        Ok(self.hermiticity_violations(spec)?.is_empty())
    }

    /// Errors with the violated slots unless Hermitian under the default spec.
    pub fn require_hermitian(&self) -> Result<()> {
        let slots = self.hermiticity_violations(&SampleSpec::default())?;
        if slots.is_empty() {
            Ok(())
        } else {
            Err(Error::NotHermitian { slots })
        }
    }

    /// `(H + H†)/2`.
    pub fn hermitize(&self) -> Self {
        self.add(&self.adjoint())
            .expect("same dimension")
            .scale(Complex64::new(0.5, 0.0))
    }

    /// Binds coefficients to a grid so repeated applications reuse them.
    pub fn on_grid(&self, grid: &Grid) -> Result<GridOperator> {
        GridOperator::new(self, grid)
    }

    /// `Σ h_n(q,t) D^n ψ` with spectral derivatives.
    pub fn apply(&self, psi: &GridState, t: f64) -> Result<GridState> {
        let values = self.on_grid(&psi.grid)?.apply(&psi.values, t)?;
        Ok(GridState { grid: psi.grid.clone(), values, t: psi.t })
    }

    /// Text form accepted by [`parse_hamiltonian`].
    pub fn to_file_string(&self) -> String {
        let mut s = format!("dim = {}\n", self.dim);
        for (n, h) in &self.terms {
            let _ = writeln!(s, "term {n} = \"{h}\"");
        }
        s
    }
}

/// Coefficient sampled on a grid.
#[derive(Clone)]
pub(crate) enum CoefGrid {
    Const(Complex64),
    Field(Arc<Vec<Complex64>>),
}

impl CoefGrid {
    pub(crate) fn eval(h: &CoefficientExpression, coords: &[Vec<f64>], t: f64) -> Result<Self> {
        Ok(match h.as_constant() {
            Some(c) => CoefGrid::Const(c),
            None => CoefGrid::Field(Arc::new(h.eval_points(coords, t)?)),
        })
    }

    #[inline]
    pub(crate) fn at(&self, i: usize) -> Complex64 {
        match self {
            CoefGrid::Const(c) => *c,
            CoefGrid::Field(v) => v[i],
        }
    }

    pub(crate) fn max_abs(&self) -> f64 {
        match self {
            CoefGrid::Const(c) => c.norm(),
            CoefGrid::Field(v) => v.iter().fold(0.0f64, |m, z| m.max(z.norm())),
        }
    }
}

/// A differential operator with its time-independent coefficients sampled
/// on a fixed grid.
pub struct GridOperator {
    grid: Grid,
    coords: Vec<Vec<f64>>,
    terms: Vec<(MultiIndex, CoefficientExpression, Option<CoefGrid>)>,
}

impl GridOperator {
    fn new(op: &DifferentialOperator, grid: &Grid) -> Result<Self> {
        check_dim(op.dim, grid.dim())?;
        if let Some(&n) = grid.shape().iter().find(|&&n| n < MIN_POINTS_PER_AXIS) {
            return Err(Error::Resolution(format!(
                "{n} points on an axis; at least {MIN_POINTS_PER_AXIS} are required"
            )));
        }
        let coords = grid.coordinate_columns();
        let terms = op
            .terms
            .iter()
            .map(|(n, h)| {
                let cached = if h.depends_on_time() { None } else { Some(CoefGrid::eval(h, &coords, 0.0)?) };
                Ok((n.clone(), h.clone(), cached))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridOperator { grid: grid.clone(), coords, terms })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn coefficient(&self, k: usize, t: f64) -> Result<CoefGrid> {
        let (_, h, cached) = &self.terms[k];
        match cached {
            Some(c) => Ok(c.clone()),
            None => CoefGrid::eval(h, &self.coords, t),
        }
    }

    pub fn apply(&self, values: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        check_dim(self.grid.len(), values.len())?;
        let spec = self.grid.spectrum(values)?;
        let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
        for (k, (n, _, _)) in self.terms.iter().enumerate() {
            let d = if n.is_zero() { values.to_vec() } else { spec.derivative(n)? };
            let h = self.coefficient(k, t)?;
            out.par_iter_mut().zip(d.par_iter()).enumerate().for_each(|(i, (o, dv))| {
                *o += h.at(i) * dv;
            });
        }
        Ok(out)
    }

    /// `Σ_n max|h_n| Π_j k_max,j^{n_j}`, an upper estimate of the spectral radius.
    pub fn spectral_radius_bound(&self, t: f64) -> Result<f64> {
        let mut r = 0.0;
        for (k, (n, _, _)) in self.terms.iter().enumerate() {
            let kmax: f64 = (0..self.grid.dim())
                .map(|a| self.grid.max_wavenumber(a).powi(n.get(a) as i32))
                .product();
            r += self.coefficient(k, t)?.max_abs() * kmax;
        }
        Ok(r)
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Parses the Hamiltonian text format:
///
/// ```text
/// # comment
/// dim = 1
/// term [2] = "-0.5"
/// term [0] = "0.5*q1^2"
/// ```
pub fn parse_hamiltonian(text: &str) -> Result<DifferentialOperator> {
    let mut dim: Option<usize> = None;
    let mut seen = BTreeMap::new();
    let mut terms = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some(d) = dim else {
            let rest = line
                .strip_prefix("dim")
                .and_then(|r| r.trim_start().strip_prefix('='))
                .ok_or_else(|| Error::format(lineno, "expected `dim = N` before any term"))?;
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| Error::format(lineno, format!("invalid dimension `{}`", rest.trim())))?;
            if n == 0 {
                return Err(Error::format(lineno, "dimension must be positive"));
            }
            dim = Some(n);
            continue;
        };
        let rest = line
            .strip_prefix("term")
            .ok_or_else(|| Error::format(lineno, format!("expected `term [..] = \"..\"`, found `{line}`")))?
            .trim_start();
        let close = rest
            .find(']')
            .ok_or_else(|| Error::format(lineno, "missing `]` in multi-index"))?;
        let index: MultiIndex = rest[..=close]
            .parse()
            .map_err(|e| Error::format(lineno, format!("{e}")))?;
        if index.dim() != d {
            return Err(Error::format(
                lineno,
                format!("multi-index {index} has {} entries, expected {d}", index.dim()),
            ));
        }
        let rhs = rest[close + 1..]
            .trim_start()
            .strip_prefix('=')
            .ok_or_else(|| Error::format(lineno, "expected `=` after multi-index"))?
            .trim();
        let body = rhs
            .strip_prefix('"')
            .and_then(|r| r.strip_suffix('"'))
            .ok_or_else(|| Error::format(lineno, "coefficient must be a double-quoted expression"))?;
        if let Some(prev) = seen.insert(index.clone(), lineno) {
            return Err(Error::format(lineno, format!("duplicate term {index} (first on line {prev})")));
        }
        let expr = CoefficientExpression::parse(body, d)
            .map_err(|e| Error::format(lineno, format!("in expression: {e}")))?;
        terms.push((index, expr));
    }
    let dim = dim.ok_or_else(|| Error::format(1, "empty Hamiltonian file"))?;
    DifferentialOperator::from_terms(dim, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn op(dim: usize, terms: &[(&str, &str)]) -> DifferentialOperator {
        DifferentialOperator::from_strs(dim, terms).unwrap()
    }

    fn same(a: &DifferentialOperator, b: &DifferentialOperator) -> bool {
        let diff = a.add(&b.scale(Complex64::new(-1.0, 0.0))).unwrap();
        diff.is_zero()
    }

    #[test]
    fn adjoint_examples() {
        let d = op(1, &[("[1]", "1")]);
        assert!(same(&d.adjoint(), &op(1, &[("[1]", "-1")])));
        let h = op(1, &[("[2]", "-0.5"), ("[0]", "q1^2")]);
        assert!(same(&h.adjoint(), &h));
        let qp = op(1, &[("[1]", "-i*q1")]);
        assert!(same(&qp.adjoint(), &op(1, &[("[1]", "-i*q1"), ("[0]", "-i")])));
    }

    #[test]
    fn hermiticity_examples() {
        let spec = SampleSpec::default();
        assert!(!op(1, &[("[1]", "1")]).is_hermitian(&spec).unwrap());
        assert!(op(1, &[("[1]", "-i")]).is_hermitian(&spec).unwrap());
        let qp = op(1, &[("[1]", "-i*q1")]);
        assert!(!qp.is_hermitian(&spec).unwrap());
        let sym = qp.hermitize();
        assert!(sym.is_hermitian(&spec).unwrap());
        assert!(same(&sym, &op(1, &[("[1]", "-i*q1"), ("[0]", "-0.5*i")])));
    }

    #[test]
    fn violation_slots_for_first_derivative() {
        let v = op(1, &[("[1]", "1")]).hermiticity_violations(&SampleSpec::default()).unwrap();
        assert_eq!(v, vec![MultiIndex::new(vec![1])]);
    }

    #[test]
    fn hermitize_examples() {
        assert!(op(1, &[("[1]", "1")]).hermitize().is_zero());
        let lap = op(1, &[("[2]", "-0.5")]);
        assert!(same(&lap.hermitize(), &lap));
    }

    #[test]
    fn adjoint_is_an_involution_in_2d() {
        let h = op(2, &[("[1,1]", "i*q1*exp(q2)"), ("[0,2]", "sin(q1) + i*q2^2"), ("[1,0]", "q2")]);
        let back = h.adjoint().adjoint();
        let spec = SampleSpec::default().with_tol(1e-8);
        for n in h.terms().keys().chain(back.terms().keys()) {
            let z = CoefficientExpression::zero(2);
            let a = h.coefficient(n).unwrap_or(&z);
            let b = back.coefficient(n).unwrap_or(&z);
            assert!(a.approx_equal(b, &spec).unwrap(), "slot {n}");
        }
    }

    #[test]
    fn apply_plane_wave() {
        let g = Grid::cube(1, 64, 0.0, 2.0 * PI).unwrap();
        let k = 3.0;
        let psi = GridState::from_fn(&g, 0.0, |q| Complex64::new(0.0, k * q[0]).exp());
        let h = op(1, &[("[2]", "-0.5")]);
        let out = h.apply(&psi, 0.0).unwrap();
        for (a, b) in out.values.iter().zip(&psi.values) {
            assert!((a - b * (k * k / 2.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn apply_multiplication_and_time_dependence() {
        let g = Grid::cube(1, 16, -1.0, 2.0).unwrap();
        let psi = GridState::from_fn(&g, 0.0, |q| Complex64::new(1.0 + q[0], 0.5));
        let out = op(1, &[("[0]", "q1*t")]).apply(&psi, 2.0).unwrap();
        for i in 0..g.len() {
            let q = g.point(i)[0];
            assert!((out.values[i] - psi.values[i] * (2.0 * q)).norm() < 1e-12);
        }
    }

    #[test]
    fn apply_requires_resolution() {
        let g = Grid::cube(1, 8, 0.0, 1.0).unwrap();
        let psi = GridState::from_fn(&g, 0.0, |_| Complex64::new(1.0, 0.0));
        assert!(matches!(op(1, &[("[2]", "1")]).apply(&psi, 0.0), Err(Error::Resolution(_))));
    }

    #[test]
    fn file_round_trip() {
        let text = "# oscillator\ndim = 1\nterm [2] = \"-0.5\"  # kinetic\nterm [0] = \"0.5*q1^2\"\n";
        let h = parse_hamiltonian(text).unwrap();
        assert_eq!(h.terms().len(), 2);
        let again = parse_hamiltonian(&h.to_file_string()).unwrap();
        assert!(same(&h, &again));
    }

    #[test]
    fn file_errors() {
        let cases = [
            "term [1] = \"1\"",
            "dim = 1\nterm [1] = \"1\"\nterm [1] = \"2\"",
            "dim = 2\nterm [1] = \"1\"",
            "dim = 1\nterm [1] = 1",
            "dim = 1\nterm [1] = \"q2\"",
            "dim = x",
            "",
        ];
        for c in cases {
            let e = parse_hamiltonian(c).unwrap_err();
            assert!(e.is_input_error(), "{c:?} gave {e}");
        }
        let e = parse_hamiltonian("dim = 1\n\nterm [1] = \"1 +\"").unwrap_err();
        assert!(matches!(e, Error::Format { line: 3, .. }));
    }

    #[test]
    fn spectral_radius_bound_counts_orders() {
        let g = Grid::cube(1, 32, 0.0, 2.0 * PI).unwrap();
        let h = op(1, &[("[2]", "-0.5"), ("[0]", "2")]);
        let r = h.on_grid(&g).unwrap().spectral_radius_bound(0.0).unwrap();
        assert!((r - (0.5 * 16.0f64.powi(2) + 2.0)).abs() < 1e-12);
    }
}
