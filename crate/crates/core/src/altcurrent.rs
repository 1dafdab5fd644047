//! Alternative current constructions used to cross-check the canonical one.
//!
//! Born–Jordan form (one dimension). Writing `H = Σ_n g_n(q) p^n` with
//! `g_n = h_n i^n`, the current `⟨q|∂_p(ρH)|q⟩` with the cyclic ordering
//! `Σ_{k=1}^{n} p^{n-k} ρ g_n p^{k-1}` and `ρ = |ψ⟩⟨ψ|` has diagonal
//!
//! ```text
//! j = Σ_n Σ_{k=1}^{n} [(-i∂)^{n-k} ψ] · [(i∂)^{k-1} (g_n ψ*)]
//! ```
//!
//! since `⟨ψ|g p^{k-1}|q⟩` is the transpose action of `p^{k-1}` on `g ψ*`,
//! and the transpose of `-i∂` is `i∂`.
//!
//! Velocity-operator form (order ≤ 2). `i[H, q_i] = i Σ_n n_i h_n D^{n-e_i}`
//! and `j_i = Re(ψ* v_i ψ)`.

use num_complex::Complex64;

use crate::current::IMAGINARY_RESIDUE_TOL;
use crate::error::{Error, Result};
use crate::grid::{max_abs, GridState, VectorField};
use crate::multiindex::MultiIndex;
use crate::operator::{CoefGrid, DifferentialOperator};

/// `g_n = h_n i^n`, the coefficients of `p^n`.
pub fn momentum_coefficients(h: &DifferentialOperator) -> Vec<(u32, crate::expr::CoefficientExpression)> {
    h.terms()
        .iter()
        .map(|(n, hn)| {
            let k = n.order();
            (k, hn.scale(Complex64::new(0.0, 1.0).powu(k)))
        })
        .collect()
}

fn real_part(axis: usize, acc: Vec<Complex64>, scale: f64) -> Result<Vec<f64>> {
    let re: Vec<f64> = acc.iter().map(|z| z.re).collect();
    let residue = acc.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let threshold = IMAGINARY_RESIDUE_TOL * max_abs(&re) + 1e-12 * scale;
    if residue > threshold || !residue.is_finite() {
        return Err(Error::ImaginaryResidue { axis: axis + 1, residue, threshold });
    }
    Ok(re)
}

pub fn born_jordan_current(h: &DifferentialOperator, psi: &GridState, t: f64) -> Result<VectorField> {
    if h.dim() != 1 || psi.dim() != 1 {
        return Err(Error::Inapplicable("the Born–Jordan form is one-dimensional".into()));
    }
    h.require_hermitian()?;
    let grid = &psi.grid;
    let coords = grid.coordinate_columns();
    let spec_psi = grid.spectrum(&psi.values)?;
    let len = grid.len();
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut scale = 0.0f64;
    let minus_i = Complex64::new(0.0, -1.0);
    let plus_i = Complex64::new(0.0, 1.0);
    for (n, g) in momentum_coefficients(h) {
        if n == 0 {
            continue;
        }
        let gg = CoefGrid::eval(&g, &coords, t)?;
        let gpsi: Vec<Complex64> = psi.values.iter().enumerate().map(|(p, v)| gg.at(p) * v.conj()).collect();
        let spec_g = grid.spectrum(&gpsi)?;
        for k in 1..=n {
            let left = spec_psi.derivative(&MultiIndex::new(vec![n - k]))?;
            let right = spec_g.derivative(&MultiIndex::new(vec![k - 1]))?;
            let cl = minus_i.powu(n - k);
            let cr = plus_i.powu(k - 1);
            for p in 0..len {
                let v = cl * left[p] * cr * right[p];
                acc[p] += v;
                scale = scale.max(v.norm());
            }
        }
    }
    Ok(VectorField { grid: grid.clone(), components: vec![real_part(0, acc, scale)?] })
}

/// `v_i = i[H, q_i] = i Σ_n n_i h_n D^{n-e_i}` as a differential operator.
pub fn velocity_operator(h: &DifferentialOperator, axis: usize) -> DifferentialOperator {
    let terms = h.terms().iter().filter_map(|(n, hn)| {
        let lowered = n.with_decremented(axis)?;
        Some((lowered, hn.scale(Complex64::new(0.0, f64::from(n.get(axis))))))
    });
    DifferentialOperator::from_terms(h.dim(), terms).expect("dimensions already checked")
}

pub fn second_order_current(h: &DifferentialOperator, psi: &GridState, t: f64) -> Result<VectorField> {
    if h.max_order() > 2 {
        return Err(Error::Inapplicable(format!(
            "the velocity-operator current needs order <= 2, operator has order {}",
            h.max_order()
        )));
    }
    h.require_hermitian()?;
    let components = (0..h.dim())
        .map(|i| {
            let v = velocity_operator(h, i);
            if v.is_zero() {
                return Ok(vec![0.0; psi.grid.len()]);
            }
            let vpsi = v.apply(psi, t)?;
            // ψ* v ψ is not pointwise real; its imaginary part is a gradient
            Ok(psi.values.iter().zip(&vpsi.values).map(|(a, b)| (a.conj() * b).re).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(VectorField { grid: psi.grid.clone(), components })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldComparison {
    pub max_abs_diff: f64,
    /// `max|∇·(a - b)|`.
    pub max_div_diff: f64,
}

pub fn compare_fields(a: &VectorField, b: &VectorField) -> Result<FieldComparison> {
    let d = a.sub(b)?;
    let div = d.grid.divergence(&d)?;
    Ok(FieldComparison { max_abs_diff: d.max_abs(), max_div_diff: max_abs(&div) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::current::eval_current;
    use crate::grid::Grid;
    use crate::state::{Preset, StateSpec};
    use std::f64::consts::PI;

    fn op(dim: usize, terms: &[(&str, &str)]) -> DifferentialOperator {
        DifferentialOperator::from_strs(dim, terms).unwrap()
    }

    fn packet(g: &Grid, k: f64) -> GridState {
        StateSpec::single(Preset::gaussian(vec![0.3], vec![1.0], vec![k])).build(g).unwrap()
    }

    #[test]
    fn born_jordan_standard_and_dilation() {
        let g = Grid::cube(1, 256, -16.0, 32.0).unwrap();
        let psi = packet(&g, 1.2);
        for h in [op(1, &[("[2]", "-0.5")]), op(1, &[("[1]", "-i*q1"), ("[0]", "-0.5*i")]), op(1, &[("[4]", "1")])] {
            let bj = born_jordan_current(&h, &psi, 0.0).unwrap();
            let canon = eval_current(&h, &psi, 0.0).unwrap();
            let c = compare_fields(&bj, &canon).unwrap();
            assert!(c.max_abs_diff < 1e-10 * canon.max_abs().max(1.0), "{h:?}: {c:?}");
        }
        let dil = born_jordan_current(&op(1, &[("[1]", "-i*q1"), ("[0]", "-0.5*i")]), &psi, 0.0).unwrap();
        for i in 0..g.len() {
            let q = g.point(i)[0];
            assert!((dil.components[0][i] - q * psi.values[i].norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn born_jordan_rejects_2d() {
        let g = Grid::cube(2, 16, 0.0, 2.0 * PI).unwrap();
        let psi = GridState::from_fn(&g, 0.0, |_| Complex64::new(1.0, 0.0));
        let r = born_jordan_current(&op(2, &[("[2,0]", "-0.5")]), &psi, 0.0);
        assert!(matches!(r, Err(Error::Inapplicable(_))));
    }

    #[test]
    fn velocity_operator_of_standard_hamiltonian() {
        let h = op(2, &[("[2,0]", "-0.5"), ("[0,2]", "-0.5"), ("[0,0]", "q1*q2")]);
        let v = velocity_operator(&h, 1);
        assert_eq!(v.terms().len(), 1);
        assert_eq!(v.coefficient(&MultiIndex::new(vec![0, 1])).unwrap().as_constant(), Some(Complex64::new(0.0, -1.0)));
        assert!(velocity_operator(&op(1, &[("[0]", "q1^2")]), 0).is_zero());
    }

    #[test]
    fn second_order_matches_standard_current() {
        let g = Grid::cube(1, 128, -16.0, 32.0).unwrap();
        let psi = packet(&g, 0.7);
        let h = op(1, &[("[2]", "-0.5"), ("[0]", "0.5*q1^2")]);
        let a = second_order_current(&h, &psi, 0.0).unwrap();
        let b = eval_current(&h, &psi, 0.0).unwrap();
        assert!(compare_fields(&a, &b).unwrap().max_abs_diff < 1e-12);
        let p4 = op(1, &[("[4]", "1")]);
        assert!(matches!(second_order_current(&p4, &psi, 0.0), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn identical_fields_compare_to_zero() {
        let g = Grid::cube(2, 16, 0.0, 1.0).unwrap();
        let f = VectorField { grid: g.clone(), components: vec![vec![0.3; g.len()], vec![-1.0; g.len()]] };
        assert_eq!(compare_fields(&f, &f).unwrap(), FieldComparison { max_abs_diff: 0.0, max_div_diff: 0.0 });
    }
}
