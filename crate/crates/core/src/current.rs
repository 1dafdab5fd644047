//! The conserved probability current of a Hermitian differential operator.
//!
//! The current is stored as a bilinear table
//! `j_i = Σ_{n,m} J_{i,nm} D^n ψ conj(D^m ψ)` whose coefficients are exact
//! rational multiples of derivatives of the `h_r`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::expr::{CoefficientExpression, SampleSpec};
use crate::grid::{max_abs, Grid, GridState, VectorField};
use crate::multiindex::{binomial_multi, rational_to_f64, MultiIndex};
use crate::operator::{CoefGrid, DifferentialOperator};

/// Relative tolerance on the imaginary part of an evaluated current.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-9;

type Pair = (MultiIndex, MultiIndex);

#[derive(Clone, Debug)]
pub struct CurrentTable {
    dim: usize,
    axes: Vec<BTreeMap<Pair, CoefficientExpression>>,
}

fn ratio(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

/// `r!/|r|! · |s|!/s! · |n|!/n!` with `s = r - n - e_i`.
fn multinomial_weight(r: &MultiIndex, s: &MultiIndex, n: &MultiIndex) -> BigRational {
    ratio(r.factorial(), r.order_factorial())
        * ratio(s.order_factorial(), s.factorial())
        * ratio(n.order_factorial(), n.factorial())
}

/// `n!/|n|! · |m|!/m! · |k|!/k!` with `k = n - m - e_i`.
fn direct_weight(n: &MultiIndex, m: &MultiIndex, k: &MultiIndex) -> f64 {
    let w = ratio(n.factorial(), n.order_factorial())
        * ratio(m.order_factorial(), m.factorial())
        * ratio(k.order_factorial(), k.factorial());
    rational_to_f64(&w) * f64::from(m.parity_sign())
}

impl CurrentTable {
    /// Derives `J_{i,nm}`; rejects operators that fail the Hermiticity test.
    pub fn derive(h: &DifferentialOperator) -> Result<Self> {
        h.require_hermitian()?;
        Ok(Self::derive_unchecked(h))
    }

    /// Same formula without the Hermiticity gate. The result is only a
    /// conserved current when `h` is Hermitian.
    pub fn derive_unchecked(h: &DifferentialOperator) -> Self {
        let dim = h.dim();
        let mut sums: Vec<BTreeMap<Pair, Vec<(BigRational, MultiIndex, MultiIndex)>>> = vec![BTreeMap::new(); dim];
        for r in h.terms().keys() {
            let r_sign = r.parity_sign();
            for (i, axis_sums) in sums.iter_mut().enumerate() {
                let Some(s0) = r.with_decremented(i) else { continue };
                for n in s0.lower_set() {
                    let s = s0.checked_sub(&n).expect("n <= s0");
                    let mw = multinomial_weight(r, &s, &n);
                    // (-1)^{|r+n|+1}
                    let sign = -r_sign * n.parity_sign();
                    for m in s.lower_set() {
                        let b = binomial_multi(&s, &m).expect("same dimension");
                        let w = &mw * BigRational::from_integer(b) * BigRational::from_integer(sign.into());
                        if w.is_zero() {
                            continue;
                        }
                        let k = s.checked_sub(&m).expect("m <= s");
                        axis_sums.entry((n.clone(), m)).or_default().push((w, r.clone(), k));
                    }
                }
            }
        }

        let mut deriv_cache: HashMap<(MultiIndex, MultiIndex), CoefficientExpression> = HashMap::new();
        let i_unit = Complex64::new(0.0, 1.0);
        let axes = sums
            .into_iter()
            .map(|axis_sums| {
                let mut out = BTreeMap::new();
                for (pair, contribs) in axis_sums {
                    // collect equal (r, k) contributions before embedding the weight
                    let mut merged: BTreeMap<(MultiIndex, MultiIndex), BigRational> = BTreeMap::new();
                    for (w, r, k) in contribs {
                        let e = merged.entry((r, k)).or_insert_with(BigRational::zero);
                        *e += w;
                    }
                    let mut acc = CoefficientExpression::zero(dim);
                    for ((r, k), w) in merged {
                        if w.is_zero() {
                            continue;
                        }
                        let d = deriv_cache
                            .entry((r.clone(), k.clone()))
                            .or_insert_with(|| h.terms()[&r].differentiate(&k).expect("same dimension"))
                            .clone();
                        if d.is_zero() {
                            continue;
                        }
                        let c = if w.is_one() { i_unit } else { i_unit * rational_to_f64(&w) };
                        acc = &acc + &d.scale(c);
                    }
                    if !acc.is_zero() && !acc.approx_zero(&SampleSpec::default()).unwrap_or(false) {
                        out.insert(pair, acc);
                    }
                }
                out
            })
            .collect();
        CurrentTable { dim, axes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn axis(&self, i: usize) -> &BTreeMap<Pair, CoefficientExpression> {
        &self.axes[i]
    }

    pub fn get(&self, i: usize, n: &MultiIndex, m: &MultiIndex) -> Option<&CoefficientExpression> {
        self.axes[i].get(&(n.clone(), m.clone()))
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest `|J_{i,nm} - conj(J_{i,mn})|` over reproducible sample points in
    /// `[-2,2]^N × [0,1]`, normalised per entry by `1 + |J_{i,nm}| + |J_{i,mn}|`.
    pub fn reality_defect(&self, spec: &SampleSpec) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let points: Vec<(Vec<f64>, f64)> = (0..spec.samples)
            .map(|_| ((0..self.dim).map(|_| rng.gen_range(-2.0..2.0)).collect(), rng.gen_range(0.0..1.0)))
            .collect();
        let zero = CoefficientExpression::zero(self.dim);
        let mut worst = 0.0f64;
        for axis in &self.axes {
            for ((n, m), j) in axis {
                let jt = axis.get(&(m.clone(), n.clone())).unwrap_or(&zero);
                for (q, t) in &points {
                    let (Ok(a), Ok(b)) = (j.evaluate(q, *t), jt.evaluate(q, *t)) else { continue };
                    let d = (a - b.conj()).norm() / (1.0 + a.norm() + b.norm());
                    worst = worst.max(d);
                }
            }
        }
        Ok(worst)
    }

    /// Binds the table to a grid, caching time-independent coefficients.
    pub fn on_grid(&self, grid: &Grid) -> Result<CurrentEvaluator<'_>> {
        check_dim(self.dim, grid.dim())?;
        let coords = grid.coordinate_columns();
        let cached = self
            .axes
            .iter()
            .map(|axis| {
                axis.iter()
                    .map(|(_, j)| {
                        if j.depends_on_time() {
                            Ok(None)
                        } else {
                            CoefGrid::eval(j, &coords, 0.0).map(Some)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CurrentEvaluator { table: self, grid: grid.clone(), coords, cached })
    }

    /// `j_i = Σ J_{i,nm} D^n ψ conj(D^m ψ)` on the grid of `psi`.
    pub fn eval(&self, psi: &GridState, t: f64) -> Result<VectorField> {
        self.on_grid(&psi.grid)?.eval(psi, t)
    }

    pub fn to_json(&self) -> TableJson {
        let axes = self
            .axes
            .iter()
            .enumerate()
            .map(|(i, axis)| {
                let entries = axis
                    .iter()
                    .map(|((n, m), j)| TableEntry { n: n.clone(), m: m.clone(), expression: j.to_string() })
                    .collect();
                ((i + 1).to_string(), entries)
            })
            .collect();
        TableJson { dim: self.dim, axes }
    }

    pub fn from_json(doc: &TableJson) -> Result<Self> {
        let dim = doc.dim;
        let mut axes = vec![BTreeMap::new(); dim];
        for (key, entries) in &doc.axes {
            let i: usize = key
                .parse()
                .ok()
                .filter(|i| (1..=dim).contains(i))
                .ok_or_else(|| Error::format(0, format!("invalid axis key `{key}`")))?;
            for e in entries {
                check_dim(dim, e.n.dim())?;
                check_dim(dim, e.m.dim())?;
                let j = CoefficientExpression::parse(&e.expression, dim)?;
                axes[i - 1].insert((e.n.clone(), e.m.clone()), j);
            }
        }
        Ok(CurrentTable { dim, axes })
    }

    /// Guidance equations `dq_i/dt = j_i / |ψ|^2` in LaTeX.
    pub fn to_latex(&self) -> String {
        let mut s = String::from("\\begin{align}\n");
        for (i, axis) in self.axes.iter().enumerate() {
            let _ = write!(s, "  \\frac{{dq_{{{}}}}}{{dt}} &= \\frac{{1}}{{|\\psi|^2}}", i + 1);
            if axis.is_empty() {
                s.push_str(" \\cdot 0");
            } else {
                s.push_str(" \\Big(");
                for (k, ((n, m), j)) in axis.iter().enumerate() {
                    if k > 0 {
                        s.push_str("\n    + ");
                    }
                    let _ = write!(s, "\\left({}\\right) {} \\, \\overline{{{}}}", j.to_latex(), d_latex(n), d_latex(m));
                }
                s.push_str(" \\Big)");
            }
            s.push_str(if i + 1 < self.axes.len() { " \\\\\n" } else { "\n" });
        }
        s.push_str("\\end{align}\n");
        s
    }
}

fn d_latex(n: &MultiIndex) -> String {
    let mut parts = String::new();
    for (a, &k) in n.entries().iter().enumerate() {
        match k {
            0 => {}
            1 => {
                let _ = write!(parts, "\\partial_{{{}}}", a + 1);
            }
            _ => {
                let _ = write!(parts, "\\partial_{{{}}}^{{{k}}}", a + 1);
            }
        }
    }
    format!("{parts}\\psi")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub n: MultiIndex,
    pub m: MultiIndex,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableJson {
    pub dim: usize,
    pub axes: BTreeMap<String, Vec<TableEntry>>,
}

/// Derivatives of one field, computed on demand from a single transform.
struct DerivativeCache<'g> {
    spectrum: crate::grid::Spectrum<'g>,
    base: Vec<Complex64>,
    cache: HashMap<MultiIndex, Vec<Complex64>>,
}

impl<'g> DerivativeCache<'g> {
    fn new(grid: &'g Grid, values: &[Complex64]) -> Result<Self> {
        Ok(DerivativeCache { spectrum: grid.spectrum(values)?, base: values.to_vec(), cache: HashMap::new() })
    }

    fn get(&mut self, n: &MultiIndex) -> Result<&[Complex64]> {
        if n.is_zero() {
            return Ok(&self.base);
        }
        if !self.cache.contains_key(n) {
            let d = self.spectrum.derivative(n)?;
            self.cache.insert(n.clone(), d);
        }
        Ok(&self.cache[n])
    }
}

/// Residue check and real part of an accumulated complex current.
fn finish_component(axis: usize, acc: Vec<Complex64>, scale: f64) -> Result<Vec<f64>> {
    let re: Vec<f64> = acc.iter().map(|z| z.re).collect();
    let residue = acc.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    // the floor keeps identically-vanishing currents from tripping on rounding
    let threshold = IMAGINARY_RESIDUE_TOL * max_abs(&re) + 1e-12 * scale;
    if residue > threshold || !residue.is_finite() {
        return Err(Error::ImaginaryResidue { axis: axis + 1, residue, threshold });
    }
    Ok(re)
}

/// A current table with its coefficients sampled on a grid.
pub struct CurrentEvaluator<'t> {
    table: &'t CurrentTable,
    grid: Grid,
    coords: Vec<Vec<f64>>,
    cached: Vec<Vec<Option<CoefGrid>>>,
}

impl CurrentEvaluator<'_> {
    /// Complex accumulations per axis plus the largest summand magnitude.
    fn accumulate(&self, psi: &GridState, t: f64) -> Result<Vec<(Vec<Complex64>, f64)>> {
        if psi.grid != self.grid {
            return Err(Error::precondition("state lives on a different grid than the evaluator"));
        }
        let mut derivs = DerivativeCache::new(&self.grid, &psi.values)?;
        let len = self.grid.len();
        let mut out = Vec::with_capacity(self.table.dim);
        for (axis, entries) in self.table.axes.iter().enumerate() {
            let mut acc = vec![Complex64::new(0.0, 0.0); len];
            let mut scale = 0.0f64;
            for (k, ((n, m), j)) in entries.iter().enumerate() {
                let coef = match &self.cached[axis][k] {
                    Some(c) => c.clone(),
                    None => CoefGrid::eval(j, &self.coords, t)?,
                };
                let dn = derivs.get(n)?.to_vec();
                let dm = derivs.get(m)?;
                let term_max = acc
                    .par_iter_mut()
                    .enumerate()
                    .map(|(p, a)| {
                        let v = coef.at(p) * dn[p] * dm[p].conj();
                        *a += v;
                        v.norm()
                    })
                    .reduce(|| 0.0, f64::max);
                scale = scale.max(term_max);
            }
            out.push((acc, scale));
        }
        Ok(out)
    }

    pub fn eval(&self, psi: &GridState, t: f64) -> Result<VectorField> {
        let components = self
            .accumulate(psi, t)?
            .into_iter()
            .enumerate()
            .map(|(axis, (acc, scale))| finish_component(axis, acc, scale))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField { grid: self.grid.clone(), components })
    }

    /// Largest imaginary part relative to the largest real part, without
    /// failing.
    pub fn imaginary_ratio(&self, psi: &GridState, t: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for (acc, _) in self.accumulate(psi, t)? {
            let re = acc.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
            let im = acc.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
            if im > 0.0 {
                worst = worst.max(im / re.max(f64::MIN_POSITIVE));
            }
        }
        Ok(worst)
    }
}

/// Derives the table and evaluates it once.
pub fn eval_current(h: &DifferentialOperator, psi: &GridState, t: f64) -> Result<VectorField> {
    CurrentTable::derive(h)?.eval(psi, t)
}

/// The nested-sum form
/// `j_i = i Σ_{n ≥ e_i} Σ_{m ≤ n-e_i} (-1)^{|m|} w(n,m) D^m(ψ* h_n) D^{n-m-e_i} ψ`.
pub fn eval_current_direct(h: &DifferentialOperator, psi: &GridState, t: f64) -> Result<VectorField> {
    h.require_hermitian()?;
    eval_current_direct_unchecked(h, psi, t)
}

pub fn eval_current_direct_unchecked(h: &DifferentialOperator, psi: &GridState, t: f64) -> Result<VectorField> {
    let grid = &psi.grid;
    check_dim(h.dim(), grid.dim())?;
    let dim = grid.dim();
    let len = grid.len();
    let coords = grid.coordinate_columns();
    let mut chi = DerivativeCache::new(grid, &psi.values)?;
    let mut accs = vec![vec![Complex64::new(0.0, 0.0); len]; dim];
    let mut scales = vec![0.0f64; dim];
    let i_unit = Complex64::new(0.0, 1.0);
    for (n, hn) in h.terms() {
        if n.is_zero() {
            continue;
        }
        let coef = CoefGrid::eval(hn, &coords, t)?;
        let phi: Vec<Complex64> = psi.values.iter().enumerate().map(|(p, v)| v.conj() * coef.at(p)).collect();
        let mut phi_d = DerivativeCache::new(grid, &phi)?;
        for i in 0..dim {
            let Some(s) = n.with_decremented(i) else { continue };
            for m in s.lower_set() {
                let k = s.checked_sub(&m).expect("m <= s");
                let w = i_unit * direct_weight(n, &m, &k);
                let dm = phi_d.get(&m)?.to_vec();
                let dk = chi.get(&k)?;
                for p in 0..len {
                    let v = w * dm[p] * dk[p];
                    accs[i][p] += v;
                    scales[i] = scales[i].max(v.norm());
                }
            }
        }
    }
    let components = accs
        .into_iter()
        .enumerate()
        .map(|(axis, acc)| finish_component(axis, acc, scales[axis]))
        .collect::<Result<Vec<_>>>()?;
    Ok(VectorField { grid: grid.clone(), components })
}

/// `I = 2 Re(i ψ* Hψ)`, so that `∂_t|ψ|^2 = -I` and `∇·j = I`.
pub fn source_term(h: &DifferentialOperator, psi: &GridState, t: f64) -> Result<Vec<f64>> {
    let hpsi = h.apply(psi, t)?;
    Ok(psi
        .values
        .iter()
        .zip(&hpsi.values)
        .map(|(p, hp)| 2.0 * (Complex64::new(0.0, 1.0) * p.conj() * hp).re)
        .collect())
}

/// Max-norm of the difference between the two sides of
/// `φ D^n χ - (-1)^{|n|} χ D^n φ = Σ_i D^{e_i}( Σ_m (-1)^{|m|} w D^m φ D^{n-m-e_i} χ )`.
pub fn identity_residual(phi: &GridState, chi: &GridState, n: &MultiIndex) -> Result<f64> {
    if phi.grid != chi.grid {
        return Err(Error::precondition("states live on different grids"));
    }
    let grid = &phi.grid;
    check_dim(grid.dim(), n.dim())?;
    let len = grid.len();
    let mut dphi = DerivativeCache::new(grid, &phi.values)?;
    let mut dchi = DerivativeCache::new(grid, &chi.values)?;
    let sign = f64::from(n.parity_sign());
    let lhs: Vec<Complex64> = {
        let a = dchi.get(n)?.to_vec();
        let b = dphi.get(n)?;
        (0..len).map(|p| phi.values[p] * a[p] - sign * chi.values[p] * b[p]).collect()
    };
    let mut rhs = vec![Complex64::new(0.0, 0.0); len];
    for i in 0..grid.dim() {
        let Some(s) = n.with_decremented(i) else { continue };
        let mut inner = vec![Complex64::new(0.0, 0.0); len];
        for m in s.lower_set() {
            let k = s.checked_sub(&m).expect("m <= s");
            let w = direct_weight(n, &m, &k);
            let a = dphi.get(&m)?.to_vec();
            let b = dchi.get(&k)?;
            for p in 0..len {
                inner[p] += w * a[p] * b[p];
            }
        }
        let d = grid.derivative(&inner, &MultiIndex::unit(grid.dim(), i))?;
        rhs.iter_mut().zip(d).for_each(|(r, v)| *r += v);
    }
    Ok(lhs.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).norm())))
}

/// Density below which the left edge counts as decayed.
pub const EDGE_DENSITY_TOL: f64 = 1e-12;

/// The unique 1D current vanishing at `-∞`:
/// `j(q) = -∫_{-∞}^q ∂_t|ψ|^2`, with a centred time difference between the two
/// snapshots and the trapezoid rule in space.
pub fn current_1d_integral(before: &GridState, after: &GridState) -> Result<Vec<f64>> {
    if before.grid != after.grid {
        return Err(Error::precondition("snapshots live on different grids"));
    }
    if before.dim() != 1 {
        return Err(Error::precondition("the integral current is only defined in one dimension"));
    }
    let dt = after.t - before.t;
    if dt.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::precondition("snapshots must be in increasing time order"));
    }
    let rb = before.density();
    let ra = after.density();
    let edge = rb[0].max(ra[0]);
    if edge >= EDGE_DENSITY_TOL {
        return Err(Error::precondition(format!(
            "density {edge:.3e} at the left boundary has not decayed below {EDGE_DENSITY_TOL:e}"
        )));
    }
    let h = before.grid.spacing(0);
    let rate: Vec<f64> = ra.iter().zip(&rb).map(|(a, b)| (a - b) / dt).collect();
    let mut j = vec![0.0; rate.len()];
    for k in 1..rate.len() {
        j[k] = j[k - 1] - 0.5 * h * (rate[k - 1] + rate[k]);
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn op(dim: usize, terms: &[(&str, &str)]) -> DifferentialOperator {
        DifferentialOperator::from_strs(dim, terms).unwrap()
    }

    fn idx(s: &str) -> MultiIndex {
        s.parse().unwrap()
    }

    fn constant(table: &CurrentTable, axis: usize, n: &str, m: &str) -> Option<Complex64> {
        table.get(axis, &idx(n), &idx(m)).map(|e| e.as_constant().expect("constant entry"))
    }

    #[test]
    fn standard_table() {
        let t = CurrentTable::derive(&op(1, &[("[2]", "-0.5"), ("[0]", "q1^2")])).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(constant(&t, 0, "[1]", "[0]"), Some(Complex64::new(0.0, -0.5)));
        assert_eq!(constant(&t, 0, "[0]", "[1]"), Some(Complex64::new(0.0, 0.5)));
    }

    #[test]
    fn fourth_order_table() {
        let t = CurrentTable::derive(&op(1, &[("[4]", "1")])).unwrap();
        assert_eq!(t.len(), 4);
        let i = Complex64::new(0.0, 1.0);
        assert_eq!(constant(&t, 0, "[3]", "[0]"), Some(i));
        assert_eq!(constant(&t, 0, "[2]", "[1]"), Some(-i));
        assert_eq!(constant(&t, 0, "[1]", "[2]"), Some(i));
        assert_eq!(constant(&t, 0, "[0]", "[3]"), Some(-i));
    }

    #[test]
    fn potential_only_has_no_current() {
        assert!(CurrentTable::derive(&op(2, &[("[0,0]", "q1^2 + q2^2")])).unwrap().is_empty());
    }

    #[test]
    fn rejects_non_hermitian() {
        assert!(matches!(CurrentTable::derive(&op(1, &[("[1]", "1")])), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn dilation_table() {
        // (qp + pq)/2 = -i q D - i/2
        let t = CurrentTable::derive(&op(1, &[("[1]", "-i*q1"), ("[0]", "-0.5*i")])).unwrap();
        assert_eq!(t.len(), 1);
        let j = t.get(0, &idx("[0]"), &idx("[0]")).unwrap();
        assert!(j.approx_equal(&CoefficientExpression::variable(0, 1), &SampleSpec::default()).unwrap());
    }

    fn plane_wave(k: f64, points: usize) -> GridState {
        // 2π/k periodic box holding exactly one wavelength times 4
        let g = Grid::cube(1, points, 0.0, 8.0 * PI / k).unwrap();
        GridState::from_fn(&g, 0.0, |q| Complex64::new(0.0, k * q[0]).exp())
    }

    #[test]
    fn plane_wave_currents() {
        let psi = plane_wave(1.0, 64);
        for h in [op(1, &[("[2]", "-0.5")])] {
            for j in [eval_current(&h, &psi, 0.0).unwrap(), eval_current_direct(&h, &psi, 0.0).unwrap()] {
                assert!(j.components[0].iter().all(|v| (v - 1.0).abs() < 1e-10));
            }
        }
        let psi = plane_wave(0.5, 64);
        let h = op(1, &[("[4]", "1")]);
        for j in [eval_current(&h, &psi, 0.0).unwrap(), eval_current_direct(&h, &psi, 0.0).unwrap()] {
            assert!(j.components[0].iter().all(|v| (v - 0.5).abs() < 1e-10));
        }
    }

    #[test]
    fn real_state_with_real_operator_has_no_current() {
        let g = Grid::cube(1, 64, -8.0, 16.0).unwrap();
        let psi = GridState::from_fn(&g, 0.0, |q| Complex64::new((-q[0] * q[0]).exp() * (1.0 + q[0]), 0.0));
        let h = op(1, &[("[4]", "0.1"), ("[2]", "-0.5"), ("[0]", "q1^2")]);
        for j in [eval_current(&h, &psi, 0.0).unwrap(), eval_current_direct(&h, &psi, 0.0).unwrap()] {
            assert!(j.max_abs() < 1e-12);
        }
    }

    #[test]
    fn corrupted_table_trips_residue_check() {
        // a non-Hermitian first-order operator gives a table with a real J_00
        let bad = CurrentTable::derive_unchecked(&op(1, &[("[1]", "1"), ("[0]", "i*q1")]));
        let g = Grid::cube(1, 64, -8.0, 16.0).unwrap();
        let psi = GridState::from_fn(&g, 0.0, |q| Complex64::new(0.0, q[0]).exp() * (-q[0] * q[0]).exp());
        assert!(matches!(bad.eval(&psi, 0.0), Err(Error::ImaginaryResidue { .. })));
    }

    #[test]
    fn identity_examples_1d() {
        let g = Grid::cube(1, 32, 0.0, 2.0 * PI).unwrap();
        let phi = GridState::from_fn(&g, 0.0, |q| Complex64::new(q[0].sin(), (2.0 * q[0]).cos()));
        let chi = GridState::from_fn(&g, 0.0, |q| Complex64::new(1.0 + q[0].cos(), 0.3 * q[0].sin()));
        for n in 0..=6 {
            let r = identity_residual(&phi, &chi, &MultiIndex::new(vec![n])).unwrap();
            let tol = if n <= 2 { 1e-10 } else { 1e-8 };
            assert!(r < tol, "n={n}: {r}");
        }
    }

    #[test]
    fn json_round_trip() {
        let t = CurrentTable::derive(&op(2, &[("[2,0]", "-0.5"), ("[0,2]", "-0.25"), ("[1,1]", "0.1*q1")]).hermitize())
            .unwrap();
        let doc = t.to_json();
        let text = serde_json::to_string(&doc).unwrap();
        let back = CurrentTable::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.len(), t.len());
        for i in 0..2 {
            for (k, j) in t.axis(i) {
                assert!(back.axis(i)[k].approx_equal(j, &SampleSpec::default()).unwrap());
            }
        }
    }

    #[test]
    fn latex_mentions_every_axis() {
        let t = CurrentTable::derive(&op(2, &[("[2,0]", "-0.5"), ("[0,2]", "-0.5")])).unwrap();
        let s = t.to_latex();
        assert!(s.contains("dq_{1}") && s.contains("dq_{2}") && s.contains("\\partial_{2}\\psi"));
    }

    #[test]
    fn integral_current_requires_decay() {
        let g = Grid::cube(1, 32, 0.0, 1.0).unwrap();
        let a = GridState::from_fn(&g, 0.0, |_| Complex64::new(1.0, 0.0));
        let mut b = a.clone();
        b.t = 0.1;
        assert!(current_1d_integral(&a, &b).is_err());
    }
}
