#![allow(dead_code)]

use std::f64::consts::PI;

use guidance_core::{CoefficientExpression, Complex64, DifferentialOperator, Grid, GridState, MultiIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn complex_literal(rng: &mut impl Rng) -> String {
    let re: f64 = rng.gen_range(-1.0..1.0);
    let im: f64 = rng.gen_range(-1.0..1.0);
    format!("({re:.4}{im:+.4}*i)")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficients {
    /// Constants plus `sin`/`cos` of one coordinate; exact on a `[0, 2π)` grid.
    Periodic,
    /// Constants, monomials and `sin`/`cos`; for symbolic checks only.
    General,
}

pub fn random_coefficient(rng: &mut impl Rng, dim: usize, kind: Coefficients) -> String {
    let a = rng.gen_range(1..=dim);
    let b = rng.gen_range(1..=dim);
    let factor = match (kind, rng.gen_range(0..5)) {
        (_, 0) => String::new(),
        (_, 1) => format!("*cos(q{a})"),
        (_, 2) => format!("*sin(q{a})"),
        (Coefficients::Periodic, _) => format!("*cos(q{a})*sin(q{b})"),
        (Coefficients::General, 3) => format!("*q{a}"),
        (Coefficients::General, _) => format!("*q{a}*q{b}^2"),
    };
    format!("{}{factor} + {}", complex_literal(rng), complex_literal(rng))
}

/// Random operator with `terms` slots of order `<= max_order`; not Hermitian
/// in general.
pub fn random_operator(rng: &mut impl Rng, dim: usize, max_order: u32, terms: usize, kind: Coefficients) -> DifferentialOperator {
    let slots = MultiIndex::all_up_to(dim, max_order);
    let mut h = DifferentialOperator::zero(dim);
    for n in slots.choose_multiple(rng, terms.min(slots.len())) {
        let c = CoefficientExpression::parse(&random_coefficient(rng, dim, kind), dim).unwrap();
        h.add_term(n.clone(), c).unwrap();
    }
    h
}

pub fn random_hermitian(rng: &mut impl Rng, dim: usize, max_order: u32, terms: usize, kind: Coefficients) -> DifferentialOperator {
    random_operator(rng, dim, max_order, terms, kind).hermitize()
}

/// `[0, 2π)^dim` with `points` per axis.
pub fn torus(dim: usize, points: usize) -> Grid {
    Grid::cube(dim, points, 0.0, 2.0 * PI).unwrap()
}

/// Random trigonometric polynomial with wavenumbers `|k_a| <= band`.
pub fn random_band_limited(rng: &mut impl Rng, grid: &Grid, band: i32) -> GridState {
    let dim = grid.dim();
    let mut modes: Vec<(Vec<f64>, Complex64)> = Vec::new();
    let total = (2 * band + 1).pow(dim as u32);
    for code in 0..total {
        let mut c = code;
        let k: Vec<f64> = (0..dim)
            .map(|_| {
                let v = c % (2 * band + 1);
                c /= 2 * band + 1;
                f64::from(v - band)
            })
            .collect();
        let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / f64::from(total).sqrt();
        modes.push((k, amp));
    }
    GridState::from_fn(grid, 0.0, |q| {
        modes
            .iter()
            .map(|(k, a)| {
                let phase: f64 = k.iter().zip(q).map(|(k, x)| k * x).sum();
                a * Complex64::from_polar(1.0, phase)
            })
            .sum()
    })
}

pub fn inner(a: &GridState, b: &GridState) -> Complex64 {
    let dv = a.grid.cell_volume();
    a.values.iter().zip(&b.values).map(|(x, y)| x.conj() * y).sum::<Complex64>() * dv
}

fn norm(a: &GridState) -> f64 {
    inner(a, a).re.sqrt()
}

/// Relative asymmetry `|<φ,Hψ> - <Hφ,ψ>|` over several random state pairs.
pub fn grid_hermiticity_defect(h: &DifferentialOperator, grid: &Grid, rng: &mut impl Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let phi = random_band_limited(rng, grid, 2);
        let psi = random_band_limited(rng, grid, 2);
        let hphi = h.apply(&phi, 0.0).unwrap();
        let hpsi = h.apply(&psi, 0.0).unwrap();
        let d = (inner(&phi, &hpsi) - inner(&hphi, &psi)).norm();
        let scale = norm(&phi) * norm(&hpsi) + norm(&hphi) * norm(&psi);
        if scale == 0.0 {
            continue;
        }
        worst = worst.max(d / scale);
    }
    worst
}

pub fn max_abs_complex(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}
