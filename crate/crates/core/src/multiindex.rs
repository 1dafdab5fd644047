//! Multi-indices over `N_0^N` and the exact combinatorics built on them.
//!
//! A [`MultiIndex`] doubles as the label of a mixed partial derivative
//! `D^n = d^{n_1}/dq_1^{n_1} ... d^{n_N}/dq_N^{n_N}`. Everything here is
//! exact: binomials are arbitrary-precision integers and the identity checks
//! run in rational arithmetic.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A fixed-length tuple of non-negative integers.
///
/// Ordering is graded lexicographic: first by `|n|`, then entrywise.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit index `e_axis` (0-based axis).
    pub fn unit(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dimension {dim}");
        let mut v = vec![0; dim];
        v[axis] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, axis: usize) -> u32 {
        self.0[axis]
    }

    /// `|n| = sum_i n_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.dim(), other.dim());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other`, or `None` if any entry would go negative.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if self.dim() != other.dim() {
            return None;
        }
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn with_incremented(&self, axis: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[axis] += 1;
        MultiIndex(v)
    }

    pub fn with_decremented(&self, axis: usize) -> Option<MultiIndex> {
        let mut v = self.0.clone();
        v[axis] = v[axis].checked_sub(1)?;
        Some(MultiIndex(v))
    }

    /// `n! = prod_i n_i!`.
    pub fn factorial(&self) -> BigInt {
        self.0.iter().map(|&k| factorial(k)).product()
    }

    /// `|n|!`.
    pub fn order_factorial(&self) -> BigInt {
        factorial(self.order())
    }

    /// `(-1)^{|n|}` as `+1`/`-1`.
    pub fn parity_sign(&self) -> i32 {
        if self.order() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Every `m` with `0 <= m <= self`, in graded lexicographic order.
    pub fn lower_set(&self) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.dim()];
        loop {
            out.push(MultiIndex(cur.clone()));
            let mut axis = self.dim();
            loop {
                if axis == 0 {
                    out.sort();
                    return out;
                }
                axis -= 1;
                if cur[axis] < self.0[axis] {
                    cur[axis] += 1;
                    for c in cur.iter_mut().skip(axis + 1) {
                        *c = 0;
                    }
                    break;
                }
            }
        }
    }

    /// Every multi-index of dimension `dim` with `|n| <= max_order`, graded
    /// lexicographic.
    pub fn all_up_to(dim: usize, max_order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; dim];
        fn rec(axis: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if axis == cur.len() {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for k in 0..=left {
                cur[axis] = k;
                rec(axis + 1, left - k, cur, out);
            }
            cur[axis] = 0;
        }
        rec(0, max_order, &mut cur, &mut out);
        out.sort();
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dim()
            .cmp(&other.dim())
            .then(self.order().cmp(&other.order()))
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Parses the bracketed literal form, e.g. `[2,0,1]`.
impl FromStr for MultiIndex {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| format!("multi-index must be bracketed, got `{s}`"))?;
        if inner.trim().is_empty() {
            return Err("empty multi-index".into());
        }
        inner
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|e| format!("bad multi-index entry `{}`: {e}", p.trim()))
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(MultiIndex)
    }
}

pub fn factorial(k: u32) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, x| acc * x)
}

/// Binomial coefficient for arbitrary integers: `0` for `k < 0`, `1` for
/// `k = 0`, and the falling-factorial quotient `a(a-1)...(a-k+1)/k!`
/// otherwise. For `0 <= a < k` the product contains a zero factor.
pub fn binomial(a: i64, k: i64) -> BigInt {
    match k.cmp(&0) {
        Ordering::Less => BigInt::zero(),
        Ordering::Equal => BigInt::one(),
        Ordering::Greater => {
            let mut num = BigInt::one();
            let mut den = BigInt::one();
            for j in 0..k {
                num *= BigInt::from(a) - j;
                den *= j + 1;
            }
            num / den
        }
    }
}

/// [`binomial`] narrowed to `i64`, failing instead of wrapping.
pub fn binomial_checked(a: i64, k: i64) -> Result<i64> {
    binomial(a, k)
        .to_i64()
        .ok_or(Error::Overflow { n: a, k })
}

/// `prod_i C(n_i, m_i)`.
pub fn binomial_multi(n: &MultiIndex, m: &MultiIndex) -> Result<BigInt> {
    check_dim(n.dim(), m.dim())?;
    Ok(n.entries()
        .iter()
        .zip(m.entries())
        .map(|(&a, &b)| binomial(a as i64, b as i64))
        .product())
}

fn signed_binomial_multi(top: &[i64], bottom: &[i64]) -> BigInt {
    top.iter()
        .zip(bottom)
        .map(|(&a, &b)| binomial(a, b))
        .product()
}

fn sign(exp: i64) -> BigInt {
    if exp.rem_euclid(2) == 0 {
        BigInt::one()
    } else {
        -BigInt::one()
    }
}

fn rat(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

/// Both sides of the summation identity behind the reality of the current
/// table:
///
/// `sum_{n+m+e_i <= s <= r} (-1)^{|s|} |s-n-e_i|!/|s|! C(r-n-m-e_i, r-s)
///    = (-1)^{|n+m|+1} |m|! |r-m-e_i|! / (|r|! |n|!)`
///
/// `axis` is 0-based. Requires `r >= n + m + e_axis`.
pub fn combinatorial_identity_sides(
    r: &MultiIndex,
    n: &MultiIndex,
    m: &MultiIndex,
    axis: usize,
) -> Result<(BigRational, BigRational)> {
    check_dim(r.dim(), n.dim())?;
    check_dim(r.dim(), m.dim())?;
    if axis >= r.dim() {
        return Err(Error::precondition(format!(
            "axis {axis} out of range for dimension {}",
            r.dim()
        )));
    }
    let low = n.add(m).with_incremented(axis);
    if !low.le(r) {
        return Err(Error::precondition(format!(
            "need r >= n + m + e_i, got r = {r}, n + m + e_i = {low}"
        )));
    }
    let n_ei = n.with_incremented(axis);
    let top: Vec<i64> = r
        .entries()
        .iter()
        .zip(low.entries())
        .map(|(&a, &b)| a as i64 - b as i64)
        .collect();

    let mut lhs = BigRational::zero();
    // s ranges over the box low <= s <= r.
    let span = r.checked_sub(&low).expect("checked above");
    for offset in span.lower_set() {
        let s = low.add(&offset);
        let r_minus_s: Vec<i64> = r
            .entries()
            .iter()
            .zip(s.entries())
            .map(|(&a, &b)| a as i64 - b as i64)
            .collect();
        let b = signed_binomial_multi(&top, &r_minus_s);
        if b.is_zero() {
            continue;
        }
        let s_minus = s.checked_sub(&n_ei).expect("s >= n + e_i");
        let term = rat(
            sign(s.order() as i64) * s_minus.order_factorial() * b,
            s.order_factorial(),
        );
        lhs += term;
    }

    let r_m_ei = r
        .checked_sub(&m.with_incremented(axis))
        .expect("r >= m + e_i");
    let rhs = rat(
        sign(n.order() as i64 + m.order() as i64 + 1) * m.order_factorial() * r_m_ei.order_factorial(),
        r.order_factorial() * n.order_factorial(),
    );
    Ok((lhs, rhs))
}

/// Exact check of the multi-dimensional summation identity (see
/// [`combinatorial_identity_sides`]).
pub fn check_combinatorial_identity(
    r: &MultiIndex,
    n: &MultiIndex,
    m: &MultiIndex,
    axis: usize,
) -> Result<bool> {
    let (lhs, rhs) = combinatorial_identity_sides(r, n, m, axis)?;
    Ok(lhs == rhs)
}

/// Both sides of the one-dimensional identity
///
/// `sum_{s=n+m+1}^{r} (-1)^s (s-n-1)!/s! C(r-n-m-1, r-s) = (-1)^{n+m+1} m!(r-m-1)!/(r! n!)`.
pub fn combinatorial_identity_sides_1d(r: u32, n: u32, m: u32) -> Result<(BigRational, BigRational)> {
    if r < n + m + 1 {
        return Err(Error::precondition(format!(
            "need r >= n + m + 1, got r = {r}, n = {n}, m = {m}"
        )));
    }
    let mut lhs = BigRational::zero();
    for s in (n + m + 1)..=r {
        let b = binomial((r - n - m - 1) as i64, (r - s) as i64);
        lhs += rat(sign(s as i64) * factorial(s - n - 1) * b, factorial(s));
    }
    let rhs = rat(
        sign((n + m + 1) as i64) * factorial(m) * factorial(r - m - 1),
        factorial(r) * factorial(n),
    );
    Ok((lhs, rhs))
}

pub fn check_combinatorial_identity_1d(r: u32, n: u32, m: u32) -> Result<bool> {
    let (lhs, rhs) = combinatorial_identity_sides_1d(r, n, m)?;
    Ok(lhs == rhs)
}

pub(crate) fn bigint_to_f64(n: &BigInt) -> f64 {
    n.to_f64().unwrap_or(f64::INFINITY)
}

/// Exact rational to `f64` (nearest representable for the small weights
/// that occur here).
pub(crate) fn rational_to_f64(q: &BigRational) -> f64 {
    if q.is_zero() {
        return 0.0;
    }
    let neg = q.is_negative();
    let a = q.abs();
    let v = a.numer().to_f64().unwrap_or(f64::INFINITY) / a.denom().to_f64().unwrap_or(f64::INFINITY);
    if neg {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn order_examples() {
        assert_eq!(mi(&[0, 0, 0]).order(), 0);
        assert_eq!(mi(&[2, 1]).order(), 3);
        assert_eq!(MultiIndex::unit(4, 1).order(), 1);
    }

    #[test]
    fn binomial_convention() {
        assert_eq!(binomial(4, 2), BigInt::from(6));
        assert_eq!(binomial(3, -1), BigInt::zero());
        assert_eq!(binomial(5, 0), BigInt::one());
        assert_eq!(binomial(2, 5), BigInt::zero());
        // generalized falling-factorial form for negative tops
        assert_eq!(binomial(-1, 3), BigInt::from(-1));
        assert_eq!(binomial(-2, 2), BigInt::from(3));
    }

    #[test]
    fn binomial_checked_reports_overflow() {
        assert_eq!(binomial_checked(10, 3).unwrap(), 120);
        assert!(matches!(binomial_checked(200, 100), Err(Error::Overflow { .. })));
    }

    #[test]
    fn binomial_multi_examples() {
        assert_eq!(binomial_multi(&mi(&[2, 1]), &mi(&[1, 1])).unwrap(), BigInt::from(2));
        assert_eq!(binomial_multi(&mi(&[3, 3]), &mi(&[0, 0])).unwrap(), BigInt::one());
        assert_eq!(binomial_multi(&mi(&[1, 2]), &mi(&[2, 0])).unwrap(), BigInt::zero());
        assert!(binomial_multi(&mi(&[1, 2]), &mi(&[1])).is_err());
    }

    #[test]
    fn binomial_matches_factorial_form() {
        for a in 0..15u32 {
            for b in 0..=a {
                let f = factorial(a) / (factorial(b) * factorial(a - b));
                assert_eq!(binomial(a as i64, b as i64), f);
            }
        }
    }

    #[test]
    fn identity_1d_examples() {
        let (l, r) = combinatorial_identity_sides_1d(3, 1, 1).unwrap();
        let minus_sixth = BigRational::new(BigInt::from(-1), BigInt::from(6));
        assert_eq!(l, minus_sixth);
        assert_eq!(r, minus_sixth);
        // l = 0 base case: both sides equal (-1)^r m!/r!
        for n in 0..4 {
            for m in 0..4 {
                let r = n + m + 1;
                let (l, rr) = combinatorial_identity_sides_1d(r, n, m).unwrap();
                let expect = BigRational::new(sign(r as i64) * factorial(m), factorial(r));
                assert_eq!(l, expect);
                assert_eq!(rr, expect);
            }
        }
        assert!(combinatorial_identity_sides_1d(2, 1, 1).is_err());
    }

    #[test]
    fn identity_2d_example() {
        assert!(check_combinatorial_identity(&mi(&[2, 1]), &mi(&[0, 0]), &mi(&[0, 0]), 0).unwrap());
    }

    #[test]
    fn identity_rejects_bad_precondition() {
        assert!(check_combinatorial_identity(&mi(&[1, 0]), &mi(&[1, 0]), &mi(&[0, 0]), 0).is_err());
    }

    #[test]
    fn identity_1d_exhaustive() {
        for r in 1..=8u32 {
            for n in 0..r {
                for m in 0..(r - n) {
                    assert!(check_combinatorial_identity_1d(r, n, m).unwrap(), "r={r} n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn graded_lex_ordering() {
        let mut v = vec![mi(&[0, 2]), mi(&[1, 0]), mi(&[0, 0]), mi(&[1, 1]), mi(&[0, 1])];
        v.sort();
        assert_eq!(v, vec![mi(&[0, 0]), mi(&[0, 1]), mi(&[1, 0]), mi(&[0, 2]), mi(&[1, 1])]);
    }

    #[test]
    fn literal_round_trip() {
        let n: MultiIndex = "[2, 0,1]".parse().unwrap();
        assert_eq!(n, mi(&[2, 0, 1]));
        assert_eq!(n.to_string(), "[2,0,1]");
        assert!("2,0".parse::<MultiIndex>().is_err());
        assert!("[a]".parse::<MultiIndex>().is_err());
        assert!("[-1]".parse::<MultiIndex>().is_err());
    }

    #[test]
    fn lower_set_and_enumeration() {
        assert_eq!(mi(&[1, 2]).lower_set().len(), 6);
        assert_eq!(MultiIndex::all_up_to(3, 2).len(), 10);
        assert_eq!(MultiIndex::all_up_to(2, 0), vec![mi(&[0, 0])]);
    }
}
