//! Uniform periodic grids and spectral derivatives.
//!
//! Values are stored row-major with the last axis fastest. Derivatives
//! multiply the discrete Fourier coefficients by `(i k)^n`; for odd `n`
//! the Nyquist mode is dropped so real fields stay real.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_dim, Error, Result};
use crate::multiindex::MultiIndex;

pub const MAX_DIM: usize = 3;
pub const MAX_POINTS_PER_AXIS: usize = 1024;

#[derive(Clone)]
struct Plans {
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

#[derive(Clone)]
pub struct Grid {
    shape: Vec<usize>,
    lower: Vec<f64>,
    length: Vec<f64>,
    plans: Plans,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("shape", &self.shape)
            .field("lower", &self.lower)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.lower == other.lower && self.length == other.length
    }
}

impl Grid {
    /// Box `[lower, lower + length)` per axis with `shape[a]` points.
    pub fn new(shape: Vec<usize>, lower: Vec<f64>, length: Vec<f64>) -> Result<Self> {
        let dim = shape.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::precondition(format!("grid dimension must be 1..={MAX_DIM}, got {dim}")));
        }
        check_dim(dim, lower.len())?;
        check_dim(dim, length.len())?;
        for (a, &n) in shape.iter().enumerate() {
            if !n.is_power_of_two() || !(2..=MAX_POINTS_PER_AXIS).contains(&n) {
                return Err(Error::precondition(format!(
                    "axis {} has {n} points; need a power of two in 2..={MAX_POINTS_PER_AXIS}",
                    a + 1
                )));
            }
            if !(length[a] > 0.0 && length[a].is_finite() && lower[a].is_finite()) {
                return Err(Error::precondition(format!("axis {} has an invalid extent", a + 1)));
            }
        }
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Ok(Grid { shape, lower, length, plans: Plans { forward, inverse } })
    }

    /// Same points and extent on every axis.
    pub fn cube(dim: usize, points: usize, lower: f64, length: f64) -> Result<Self> {
        Grid::new(vec![points; dim], vec![lower; dim], vec![length; dim])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn length(&self) -> &[f64] {
        &self.length
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length[axis] / self.shape[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        (0..self.shape[axis]).map(|j| self.lower[axis] + j as f64 * h).collect()
    }

    /// Multi-index of a flat offset.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .enumerate()
            .map(|(a, &j)| self.lower[a] + j as f64 * self.spacing(a))
            .collect()
    }

    /// One column per axis, `coords[a][flat]`.
    pub fn coordinate_columns(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|a| {
                let pts = self.axis_points(a);
                let stride = self.stride(a);
                let n = self.shape[a];
                (0..self.len()).map(|f| pts[(f / stride) % n]).collect()
            })
            .collect()
    }

    /// Angular wavenumbers in FFT order. The Nyquist entry is negative.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.shape[axis];
        let dk = 2.0 * PI / self.length[axis];
        (0..n)
            .map(|j| if j < n / 2 { j as f64 * dk } else { (j as f64 - n as f64) * dk })
            .collect()
    }

    pub fn max_wavenumber(&self, axis: usize) -> f64 {
        PI * self.shape[axis] as f64 / self.length[axis]
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dim()
            && q.iter().enumerate().all(|(a, &x)| x >= self.lower[a] && x < self.lower[a] + self.length[a])
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let n = self.shape[axis];
        let stride = self.stride(axis);
        let plan = if inverse { &self.plans.inverse[axis] } else { &self.plans.forward[axis] };
        let block = n * stride;
        if stride == 1 {
            data.par_chunks_mut(n).for_each(|line| plan.process(line));
            return;
        }
        for chunk in data.chunks_mut(block) {
            let mut buf = vec![Complex64::new(0.0, 0.0); block];
            for j in 0..n {
                for c in 0..stride {
                    buf[c * n + j] = chunk[j * stride + c];
                }
            }
            buf.par_chunks_mut(n).for_each(|line| plan.process(line));
            for j in 0..n {
                for c in 0..stride {
                    chunk[j * stride + c] = buf[c * n + j];
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for a in 0..self.dim() {
            self.transform_axis(data, a, false);
        }
    }

    /// Normalised inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for a in 0..self.dim() {
            self.transform_axis(data, a, true);
        }
        let s = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    pub fn spectrum(&self, values: &[Complex64]) -> Result<Spectrum<'_>> {
        check_dim(self.len(), values.len())?;
        let mut hat = values.to_vec();
        self.forward(&mut hat);
        Ok(Spectrum { grid: self, hat })
    }

    pub fn spectrum_real(&self, values: &[f64]) -> Result<Spectrum<'_>> {
        let c: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.spectrum(&c)
    }

    pub fn derivative(&self, values: &[Complex64], n: &MultiIndex) -> Result<Vec<Complex64>> {
        self.spectrum(values)?.derivative(n)
    }

    pub fn derivative_real(&self, values: &[f64], n: &MultiIndex) -> Result<Vec<f64>> {
        Ok(self.spectrum_real(values)?.derivative(n)?.into_iter().map(|z| z.re).collect())
    }

    pub fn divergence(&self, field: &VectorField) -> Result<Vec<f64>> {
        if field.grid != *self {
            return Err(Error::precondition("vector field lives on a different grid"));
        }
        let mut out = vec![0.0; self.len()];
        for (a, comp) in field.components.iter().enumerate() {
            let d = self.derivative_real(comp, &MultiIndex::unit(self.dim(), a))?;
            out.iter_mut().zip(d).for_each(|(o, v)| *o += v);
        }
        Ok(out)
    }

    pub fn gradient(&self, values: &[f64]) -> Result<VectorField> {
        let spec = self.spectrum_real(values)?;
        let components = (0..self.dim())
            .map(|a| {
                spec.derivative(&MultiIndex::unit(self.dim(), a))
                    .map(|d| d.into_iter().map(|z| z.re).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(VectorField { grid: self.clone(), components })
    }

    /// Multilinear interpolation of a periodic real field.
    pub fn interpolate(&self, field: &[f64], q: &[f64]) -> f64 {
        let dim = self.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for a in 0..dim {
            let n = self.shape[a];
            let s = (q[a] - self.lower[a]) / self.spacing(a);
            let fl = s.floor();
            frac[a] = s - fl;
            base[a] = (fl as i64).rem_euclid(n as i64) as usize;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..dim {
                let bit = (corner >> a) & 1;
                let j = (base[a] + bit) % self.shape[a];
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.shape[a] + j;
            }
            if w != 0.0 {
                acc += w * field[flat];
            }
        }
        acc
    }

    /// `Σ f dV` over the box.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }
}

/// Fourier coefficients of a field, reused across many derivatives.
pub struct Spectrum<'g> {
    grid: &'g Grid,
    hat: Vec<Complex64>,
}

impl Spectrum<'_> {
    pub fn derivative(&self, n: &MultiIndex) -> Result<Vec<Complex64>> {
        let g = self.grid;
        check_dim(g.dim(), n.dim())?;
        if n.is_zero() {
            let mut out = self.hat.clone();
            g.inverse(&mut out);
            return Ok(out);
        }
        let factors: Vec<Vec<Complex64>> = (0..g.dim())
            .map(|a| {
                let p = n.get(a);
                let half = g.shape[a] / 2;
                g.wavenumbers(a)
                    .into_iter()
                    .enumerate()
                    .map(|(j, k)| {
                        if p % 2 == 1 && j == half {
                            Complex64::new(0.0, 0.0)
                        } else {
                            Complex64::new(0.0, k).powu(p)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out: Vec<Complex64> = self
            .hat
            .par_iter()
            .enumerate()
            .map(|(flat, &h)| {
                let mut rest = flat;
                let mut f = Complex64::new(1.0, 0.0);
                for a in (0..g.dim()).rev() {
                    f *= factors[a][rest % g.shape[a]];
                    rest /= g.shape[a];
                }
                h * f
            })
            .collect();
        g.inverse(&mut out);
        Ok(out)
    }
}

/// A complex wavefunction sampled on a grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub t: f64,
}

impl GridState {
    pub fn new(grid: Grid, values: Vec<Complex64>, t: f64) -> Result<Self> {
        check_dim(grid.len(), values.len())?;
        Ok(GridState { grid, values, t })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: &Grid, t: f64, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect();
        GridState { grid: grid.clone(), values, t }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.integrate(&self.density())
    }

    pub fn normalized(mut self) -> Self {
        let s = 1.0 / self.norm_sqr().sqrt();
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Real vector field, one grid array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField { grid: grid.clone(), components: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        if self.grid != other.grid {
            return Err(Error::precondition("vector fields live on different grids"));
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(VectorField { grid: self.grid.clone(), components })
    }
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(vec![12], vec![0.0], vec![1.0]).is_err());
        assert!(Grid::new(vec![2048], vec![0.0], vec![1.0]).is_err());
        assert!(Grid::new(vec![8; 4], vec![0.0; 4], vec![1.0; 4]).is_err());
        assert!(Grid::new(vec![8], vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn round_trip_transform() {
        let g = Grid::new(vec![8, 4, 16], vec![0.0; 3], vec![1.0, 2.0, 3.0]).unwrap();
        let v: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new(i as f64, (i * i % 7) as f64)).collect();
        let mut w = v.clone();
        g.forward(&mut w);
        g.inverse(&mut w);
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn derivative_of_trig_modes() {
        let g = Grid::new(vec![32, 16], vec![0.0, -1.0], vec![2.0 * PI, 2.0]).unwrap();
        let s = GridState::from_fn(&g, 0.0, |q| Complex64::new((3.0 * q[0]).sin() * (PI * q[1]).cos(), 0.0));
        let d = g.derivative(&s.values, &MultiIndex::new(vec![2, 1])).unwrap();
        for i in 0..g.len() {
            let q = g.point(i);
            let exact = 9.0 * PI * (3.0 * q[0]).sin() * (PI * q[1]).sin();
            assert!((d[i].re - exact).abs() < 1e-10 && d[i].im.abs() < 1e-10);
        }
    }

    #[test]
    fn odd_derivative_drops_nyquist() {
        let g = Grid::cube(1, 8, 0.0, 8.0).unwrap();
        let s = GridState::from_fn(&g, 0.0, |q| Complex64::new((PI * q[0]).cos(), 0.0));
        let d = g.derivative(&s.values, &MultiIndex::new(vec![1])).unwrap();
        assert!(d.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn interpolation_is_exact_for_linear_fields_inside_cells() {
        let g = Grid::new(vec![8, 8], vec![0.0, 0.0], vec![8.0, 8.0]).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| {
            let q = g.point(i);
            2.0 * q[0] + q[1] * q[0]
        }).collect();
        let v = g.interpolate(&f, &[2.5, 3.25]);
        // bilinear reproduces 2x + xy exactly
        assert!((v - (5.0 + 2.5 * 3.25)).abs() < 1e-12);
        assert_eq!(g.interpolate(&f, &[3.0, 4.0]), f[3 * 8 + 4]);
    }

    #[test]
    fn coordinate_columns_match_points() {
        let g = Grid::new(vec![4, 2, 8], vec![1.0, 0.0, -2.0], vec![4.0, 1.0, 4.0]).unwrap();
        let cols = g.coordinate_columns();
        for i in 0..g.len() {
            let p = g.point(i);
            for a in 0..3 {
                assert_eq!(cols[a][i], p[a]);
            }
        }
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        let g = Grid::cube(2, 32, 0.0, 2.0 * PI).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| {
            let q = g.point(i);
            (2.0 * q[0]).cos() + (q[1]).sin()
        }).collect();
        let lap = g.divergence(&g.gradient(&f).unwrap()).unwrap();
        for i in 0..g.len() {
            let q = g.point(i);
            let exact = -4.0 * (2.0 * q[0]).cos() - q[1].sin();
            assert!((lap[i] - exact).abs() < 1e-10);
        }
    }
}
