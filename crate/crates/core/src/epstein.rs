//! Nonlocal current `j = ∇(∇⁻² I)` built from the source term, and the
//! Laplace Green's functions used to validate the inverse Laplacian.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::current::source_term;
use crate::error::{check_dim, Error, Result};
use crate::grid::{max_abs, Grid, GridState, VectorField};
use crate::multiindex::MultiIndex;
use crate::operator::DifferentialOperator;

/// `|mean| / max|source|` accepted by [`poisson_solve`].
pub const POISSON_MEAN_TOL: f64 = 1e-10;

/// `|mean| / max|I|` accepted by [`nonlocal_current`] before the mean is
/// projected out. Variable-coefficient operators are not exactly Hermitian
/// after discretisation, so the discrete source carries a small mean.
pub const SOURCE_MEAN_TOL: f64 = 1e-6;

/// Fundamental solution of `∇² G = δ` in `N ≥ 2` dimensions.
pub fn green_function(dim: usize, q: &[f64]) -> Result<f64> {
    check_dim(dim, q.len())?;
    if dim < 2 {
        return Err(Error::precondition("Green's function is only provided for N >= 2"));
    }
    let r = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::precondition("Green's function is singular at the origin"));
    }
    let n = dim as f64;
    Ok(if dim == 2 {
        r.ln() / (2.0 * PI)
    } else {
        -gamma(n / 2.0 - 1.0) / (4.0 * PI.powf(n / 2.0) * r.powf(n - 2.0))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonMethod {
    Spectral,
    FreeSpace,
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub phi: Vec<f64>,
    pub method: PoissonMethod,
    /// `max|∇²φ - source|`.
    pub residual: f64,
}

/// Zero-mean periodic solution of `∇²φ = source`.
pub fn poisson_solve(grid: &Grid, source: &[f64]) -> Result<PoissonSolution> {
    check_dim(grid.len(), source.len())?;
    let scale = max_abs(source);
    let mean = source.iter().sum::<f64>() / source.len() as f64;
    if mean.abs() > POISSON_MEAN_TOL * scale {
        return Err(Error::NonzeroMean { mean, scale });
    }
    if scale == 0.0 {
        return Ok(PoissonSolution { phi: vec![0.0; source.len()], method: PoissonMethod::Spectral, residual: 0.0 });
    }
    let mut hat: Vec<Complex64> = source.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    grid.forward(&mut hat);
    let ks: Vec<Vec<f64>> = (0..grid.dim()).map(|a| grid.wavenumbers(a)).collect();
    let shape = grid.shape().to_vec();
    hat.par_iter_mut().enumerate().for_each(|(flat, v)| {
        let mut rest = flat;
        let mut k2 = 0.0;
        for a in (0..shape.len()).rev() {
            let k = ks[a][rest % shape[a]];
            k2 += k * k;
            rest /= shape[a];
        }
        *v = if k2 == 0.0 { Complex64::new(0.0, 0.0) } else { -*v / k2 };
    });
    grid.inverse(&mut hat);
    let phi: Vec<f64> = hat.iter().map(|z| z.re).collect();
    let lap = laplacian(grid, &phi)?;
    let residual = lap.iter().zip(source).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(PoissonSolution { phi, method: PoissonMethod::Spectral, residual })
}

pub fn laplacian(grid: &Grid, values: &[f64]) -> Result<Vec<f64>> {
    let spec = grid.spectrum_real(values)?;
    let mut out = vec![0.0; values.len()];
    for a in 0..grid.dim() {
        let mut n = MultiIndex::zeros(grid.dim());
        n = n.with_incremented(a).with_incremented(a);
        let d = spec.derivative(&n)?;
        out.iter_mut().zip(d).for_each(|(o, v)| *o += v.re);
    }
    Ok(out)
}

/// `∇(∇⁻² I)` with `I` the source term of `h` at `psi`.
pub fn nonlocal_current(h: &DifferentialOperator, psi: &GridState, t: f64) -> Result<VectorField> {
    if psi.dim() < 2 {
        return Err(Error::Inapplicable("the nonlocal current is constructed for N >= 2; in one dimension the current is unique".into()));
    }
    h.require_hermitian()?;
    let mut source = source_term(h, psi, t)?;
    let scale = max_abs(&source);
    let mean = source.iter().sum::<f64>() / source.len() as f64;
    if mean.abs() > SOURCE_MEAN_TOL * scale {
        return Err(Error::NonzeroMean { mean, scale });
    }
    source.iter_mut().for_each(|v| *v -= mean);
    let sol = poisson_solve(&psi.grid, &source)?;
    psi.grid.gradient(&sol.phi)
}

/// `φ(x) = Σ_y G(x - y) s(y) dV` by direct summation over the grid, for target
/// points that do not coincide with a grid node.
pub fn free_space_potential(grid: &Grid, source: &[f64], targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_dim(grid.len(), source.len())?;
    let dv = grid.cell_volume();
    let dim = grid.dim();
    targets
        .par_iter()
        .map(|x| {
            check_dim(dim, x.len())?;
            let mut acc = 0.0;
            let mut d = vec![0.0; dim];
            for (flat, &s) in source.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                let y = grid.point(flat);
                for a in 0..dim {
                    d[a] = x[a] - y[a];
                }
                acc += green_function(dim, &d)? * s;
            }
            Ok(acc * dv)
        })
        .collect()
}
