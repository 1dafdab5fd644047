//! Explicit time stepping of `i ∂_t ψ = H ψ` on periodic grids.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{max_abs, GridState, VectorField};
use crate::operator::{DifferentialOperator, GridOperator};

/// Largest accepted `dt · (spectral radius estimate)` for RK4.
pub const STABILITY_BOUND: f64 = 0.5;
/// Largest accepted `|‖ψ(t)‖² - ‖ψ₀‖²|`.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSpec {
    pub dt: f64,
    pub steps: usize,
    /// Emit a snapshot every `stride` steps.
    pub stride: usize,
    pub integrator: Integrator,
}

impl EvolutionSpec {
    pub fn new(dt: f64, steps: usize, stride: usize) -> Self {
        EvolutionSpec { dt, steps, stride, integrator: Integrator::Rk4 }
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub snapshots: Vec<GridState>,
    /// `|‖ψ(t)‖² - ‖ψ₀‖²|` at each snapshot.
    pub norm_drift: Vec<f64>,
}

impl Evolution {
    pub fn max_norm_drift(&self) -> f64 {
        self.norm_drift.iter().cloned().fold(0.0, f64::max)
    }

    pub fn last(&self) -> &GridState {
        self.snapshots.last().expect("evolution always holds the initial state")
    }
}

fn axpy(y: &[Complex64], a: Complex64, x: &[Complex64]) -> Vec<Complex64> {
    y.par_iter().zip(x.par_iter()).map(|(y, x)| y + a * x).collect()
}

/// `-i H(t) ψ`.
fn rhs(op: &GridOperator, psi: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
    let mut v = op.apply(psi, t)?;
    v.par_iter_mut().for_each(|z| *z = Complex64::new(z.im, -z.re));
    Ok(v)
}

/// One classical RK4 step; `dt` may be negative.
pub fn rk4_step(op: &GridOperator, psi: &[Complex64], t: f64, dt: f64) -> Result<Vec<Complex64>> {
    let h = Complex64::new(dt, 0.0);
    let half = Complex64::new(dt / 2.0, 0.0);
    let k1 = rhs(op, psi, t)?;
    let k2 = rhs(op, &axpy(psi, half, &k1), t + dt / 2.0)?;
    let k3 = rhs(op, &axpy(psi, half, &k2), t + dt / 2.0)?;
    let k4 = rhs(op, &axpy(psi, h, &k3), t + dt)?;
    let sixth = dt / 6.0;
    Ok(psi
        .par_iter()
        .enumerate()
        .map(|(i, p)| p + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * sixth)
        .collect())
}

/// Spectral radius estimate `Σ_n max|h_n| Π_j k_max,j^{n_j}` at time `t`.
pub fn stability_radius(op: &GridOperator, t: f64) -> Result<f64> {
    op.spectral_radius_bound(t)
}

fn check_stability(op: &GridOperator, dt: f64, t: f64) -> Result<()> {
    let radius = stability_radius(op, t)?;
    let product = dt.abs() * radius;
    if product > STABILITY_BOUND {
        return Err(Error::Unstable { dt, radius, product, bound: STABILITY_BOUND });
    }
    Ok(())
}

/// Integrates from `psi0.t` for `spec.steps` steps. Snapshots are taken at
/// the start, every `stride` steps and at the final step.
pub fn evolve(h: &DifferentialOperator, psi0: &GridState, spec: &EvolutionSpec) -> Result<Evolution> {
    h.require_hermitian()?;
    if !(spec.dt > 0.0 && spec.dt.is_finite()) {
        return Err(Error::precondition("dt must be positive"));
    }
    if spec.stride == 0 {
        return Err(Error::precondition("snapshot stride must be at least 1"));
    }
    let op = h.on_grid(&psi0.grid)?;
    check_stability(&op, spec.dt, psi0.t)?;
    let n0 = psi0.norm_sqr();
    let mut psi = psi0.values.clone();
    let mut t = psi0.t;
    let mut snapshots = vec![psi0.clone()];
    let mut norm_drift = vec![0.0];
    for step in 1..=spec.steps {
        if h.depends_on_time() && step % spec.stride.max(1) == 0 {
            check_stability(&op, spec.dt, t)?;
        }
        psi = rk4_step(&op, &psi, t, spec.dt)?;
        t = psi0.t + step as f64 * spec.dt;
        let state = GridState { grid: psi0.grid.clone(), values: psi, t };
        let drift = (state.norm_sqr() - n0).abs();
        if !(drift <= NORM_DRIFT_LIMIT) {
            return Err(Error::NormDrift { drift, t, limit: NORM_DRIFT_LIMIT });
        }
        if step % spec.stride == 0 || step == spec.steps {
            snapshots.push(state.clone());
            norm_drift.push(drift);
        }
        psi = state.values;
    }
    Ok(Evolution { snapshots, norm_drift })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityResidual {
    /// `max|∂_t|ψ|² + ∇·j|` at the middle snapshot.
    pub absolute: f64,
    /// `absolute / max|∂_t|ψ|²|`; infinite when the density is stationary.
    pub relative: f64,
}

/// Centred-difference continuity check at the middle of `snapshots`.
pub fn continuity_residual(
    snapshots: &[GridState],
    current: impl Fn(&GridState) -> Result<VectorField>,
) -> Result<ContinuityResidual> {
    if snapshots.len() < 3 {
        return Err(Error::precondition("continuity residual needs at least three snapshots"));
    }
    let mid = snapshots.len() / 2;
    let (before, at, after) = (&snapshots[mid - 1], &snapshots[mid], &snapshots[mid + 1]);
    let dt = after.t - before.t;
    if dt <= 0.0 {
        return Err(Error::precondition("snapshots must be in increasing time order"));
    }
    let rate: Vec<f64> = after.density().iter().zip(before.density()).map(|(a, b)| (a - b) / dt).collect();
    let div = at.grid.divergence(&current(at)?)?;
    let absolute = rate.iter().zip(&div).fold(0.0f64, |m, (r, d)| m.max((r + d).abs()));
    let scale = max_abs(&rate);
    let relative = if scale > 0.0 { absolute / scale } else { f64::INFINITY };
    Ok(ContinuityResidual { absolute, relative })
}
