//! Guided trajectories `dq/dt = j/|ψ|²`, equilibrium sampling and the
//! equivariance check.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::current::CurrentTable;
use crate::error::{check_dim, Error, Result};
use crate::grid::{Grid, GridState, VectorField};
use crate::operator::DifferentialOperator;
use crate::solver::{evolve, EvolutionSpec};

/// Relative density below which the guidance velocity is treated as undefined.
pub const NODE_EPS: f64 = 1e-10;
/// Largest truncated fraction for which an equivariance report is valid.
pub const MAX_TRUNCATED_FRACTION: f64 = 0.1;

/// Density and current of one snapshot, ready for interpolation.
#[derive(Debug, Clone)]
pub struct GuidanceField {
    pub grid: Grid,
    pub t: f64,
    pub density: Vec<f64>,
    pub current: Vec<Vec<f64>>,
    pub max_density: f64,
}

impl GuidanceField {
    pub fn new(psi: &GridState, j: &VectorField) -> Result<Self> {
        if psi.grid != j.grid {
            return Err(Error::precondition("state and current live on different grids"));
        }
        let density = psi.density();
        let max_density = density.iter().cloned().fold(0.0, f64::max);
        Ok(GuidanceField { grid: psi.grid.clone(), t: psi.t, density, current: j.components.clone(), max_density })
    }

    /// Interpolated `(ρ, j)` at `q`.
    fn sample(&self, q: &[f64]) -> (f64, Vec<f64>) {
        let rho = self.grid.interpolate(&self.density, q);
        let j = self.current.iter().map(|c| self.grid.interpolate(c, q)).collect();
        (rho, j)
    }
}

fn guided(rho: f64, j: Vec<f64>, max_density: f64, q: &[f64]) -> Result<Vec<f64>> {
    if !(rho >= NODE_EPS * max_density) || max_density <= 0.0 {
        return Err(Error::Node { point: q.to_vec(), density: rho });
    }
    Ok(j.into_iter().map(|v| v / rho).collect())
}

/// `j(q)/|ψ(q)|²` with multilinear interpolation of both fields.
pub fn velocity(psi: &GridState, j: &VectorField, q: &[f64]) -> Result<Vec<f64>> {
    check_dim(psi.dim(), q.len())?;
    if !psi.grid.contains(q) {
        return Err(Error::precondition(format!("point {q:?} lies outside the domain")));
    }
    let f = GuidanceField::new(psi, j)?;
    let (rho, jv) = f.sample(q);
    guided(rho, jv, f.max_density, q)
}

/// A set of configurations drawn from a density.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub positions: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Coordinates along one axis.
    pub fn axis(&self, a: usize) -> Vec<f64> {
        self.positions.iter().map(|p| p[a]).collect()
    }
}

/// Rejection sampling from the multilinear interpolant of `rho`.
pub fn sample_density(grid: &Grid, rho: &[f64], count: usize, seed: u64) -> Result<Ensemble> {
    check_dim(grid.len(), rho.len())?;
    if rho.iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::precondition("density must be finite and non-negative"));
    }
    let max = rho.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Sampling("density vanishes identically".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let mut positions = Vec::with_capacity(count);
    let mut q = vec![0.0; dim];
    while positions.len() < count {
        for a in 0..dim {
            q[a] = grid.lower()[a] + rng.gen::<f64>() * grid.length()[a];
        }
        let u: f64 = rng.gen::<f64>() * max;
        if u < grid.interpolate(rho, &q) {
            positions.push(q.clone());
        }
    }
    Ok(Ensemble { positions, seed })
}

/// Positions over time; a truncated particle keeps its last position.
#[derive(Debug, Clone)]
pub struct Trajectories {
    pub times: Vec<f64>,
    /// `positions[k][p]` is particle `p` at `times[k]`.
    pub positions: Vec<Vec<Vec<f64>>>,
    /// Time at which each particle hit a node, if it did.
    pub truncated_at: Vec<Option<f64>>,
}

impl Trajectories {
    pub fn truncated_fraction(&self) -> f64 {
        let n = self.truncated_at.len();
        if n == 0 {
            return 0.0;
        }
        self.truncated_at.iter().filter(|t| t.is_some()).count() as f64 / n as f64
    }

    pub fn final_ensemble(&self, seed: u64) -> Ensemble {
        Ensemble { positions: self.positions.last().cloned().unwrap_or_default(), seed }
    }

    /// Untruncated particles at the last recorded time.
    pub fn survivors(&self) -> Vec<Vec<f64>> {
        let last = self.positions.last().cloned().unwrap_or_default();
        last.into_iter()
            .zip(&self.truncated_at)
            .filter(|(_, t)| t.is_none())
            .map(|(p, _)| p)
            .collect()
    }
}

fn wrap(grid: &Grid, q: &mut [f64]) {
    for a in 0..q.len() {
        let lo = grid.lower()[a];
        let l = grid.length()[a];
        q[a] = lo + (q[a] - lo).rem_euclid(l);
    }
}

/// Velocity at `q` with fields linearly interpolated in time between
/// `f0` and `f1`.
fn field_velocity(f0: &GuidanceField, f1: &GuidanceField, t: f64, q: &[f64]) -> Result<Vec<f64>> {
    let span = f1.t - f0.t;
    let w = if span > 0.0 { ((t - f0.t) / span).clamp(0.0, 1.0) } else { 0.0 };
    let (r0, j0) = f0.sample(q);
    let (r1, j1) = f1.sample(q);
    let rho = (1.0 - w) * r0 + w * r1;
    let j = j0.iter().zip(&j1).map(|(a, b)| (1.0 - w) * a + w * b).collect();
    let max = (1.0 - w) * f0.max_density + w * f1.max_density;
    guided(rho, j, max, q)
}

fn rk4_particle(f0: &GuidanceField, f1: &GuidanceField, q: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
    let shift = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        let mut p: Vec<f64> = base.iter().zip(k).map(|(x, v)| x + s * v).collect();
        wrap(&f0.grid, &mut p);
        p
    };
    let k1 = field_velocity(f0, f1, t, q)?;
    let k2 = field_velocity(f0, f1, t + h / 2.0, &shift(q, &k1, h / 2.0))?;
    let k3 = field_velocity(f0, f1, t + h / 2.0, &shift(q, &k2, h / 2.0))?;
    let k4 = field_velocity(f0, f1, t + h, &shift(q, &k3, h))?;
    let mut out: Vec<f64> = (0..q.len())
        .map(|a| q[a] + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]))
        .collect();
    wrap(&f0.grid, &mut out);
    Ok(out)
}

/// Integrates every particle through the snapshot window with `substeps`
/// RK4 steps per snapshot interval.
pub fn integrate_fields(fields: &[GuidanceField], ensemble: &Ensemble, substeps: usize) -> Result<Trajectories> {
    if fields.is_empty() {
        return Err(Error::precondition("no snapshots to integrate through"));
    }
    let substeps = substeps.max(1);
    let dim = fields[0].grid.dim();
    for p in &ensemble.positions {
        check_dim(dim, p.len())?;
        if !fields[0].grid.contains(p) {
            return Err(Error::precondition(format!("initial point {p:?} lies outside the domain")));
        }
    }
    let results: Vec<(Vec<Vec<f64>>, Option<f64>)> = ensemble
        .positions
        .par_iter()
        .map(|start| {
            let mut path = Vec::with_capacity(fields.len());
            path.push(start.clone());
            let mut q = start.clone();
            let mut cut = None;
            for w in fields.windows(2) {
                let (f0, f1) = (&w[0], &w[1]);
                if cut.is_none() {
                    let h = (f1.t - f0.t) / substeps as f64;
                    for s in 0..substeps {
                        let t = f0.t + s as f64 * h;
                        match rk4_particle(f0, f1, &q, t, h) {
                            Ok(next) => q = next,
                            Err(_) => {
                                cut = Some(t);
                                break;
                            }
                        }
                    }
                }
                path.push(q.clone());
            }
            (path, cut)
        })
        .collect();
    let count = results.len();
    let truncated_at: Vec<Option<f64>> = results.iter().map(|r| r.1).collect();
    if count > 0 && truncated_at.iter().all(Option::is_some) {
        return Err(Error::AllTruncated { count });
    }
    let times = fields.iter().map(|f| f.t).collect();
    let positions = (0..fields.len()).map(|k| results.iter().map(|r| r.0[k].clone()).collect()).collect();
    Ok(Trajectories { times, positions, truncated_at })
}

/// Evaluates `table` on each snapshot and integrates the ensemble.
pub fn integrate_trajectories(
    snapshots: &[GridState],
    table: &CurrentTable,
    ensemble: &Ensemble,
    substeps: usize,
) -> Result<Trajectories> {
    let fields = guidance_fields(snapshots, table)?;
    integrate_fields(&fields, ensemble, substeps)
}

pub fn guidance_fields(snapshots: &[GridState], table: &CurrentTable) -> Result<Vec<GuidanceField>> {
    let Some(first) = snapshots.first() else {
        return Err(Error::precondition("no snapshots"));
    };
    let eval = table.on_grid(&first.grid)?;
    snapshots
        .iter()
        .map(|s| GuidanceField::new(s, &eval.eval(s, s.t)?))
        .collect()
}

/// Cumulative distribution of the marginal of the multilinear interpolant of
/// `rho` along `axis`, over one period.
pub struct MarginalCdf {
    lower: f64,
    h: f64,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl MarginalCdf {
    pub fn new(grid: &Grid, rho: &[f64], axis: usize) -> Result<Self> {
        check_dim(grid.len(), rho.len())?;
        let n = grid.shape()[axis];
        let stride: usize = grid.shape()[axis + 1..].iter().product();
        let mut nodes = vec![0.0; n];
        for (flat, &r) in rho.iter().enumerate() {
            nodes[(flat / stride) % n] += r;
        }
        let h = grid.spacing(axis);
        let mut cumulative = vec![0.0; n + 1];
        for k in 0..n {
            let next = nodes[(k + 1) % n];
            cumulative[k + 1] = cumulative[k] + 0.5 * h * (nodes[k] + next);
        }
        let total = cumulative[n];
        if total <= 0.0 {
            return Err(Error::Sampling("marginal density vanishes".into()));
        }
        Ok(MarginalCdf { lower: grid.lower()[axis], h, nodes, cumulative, total })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        let s = ((x - self.lower) / self.h).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let u = s - k as f64;
        let a = self.nodes[k];
        let b = self.nodes[(k + 1) % n];
        // exact integral of the linear piece from the node to x
        let partial = self.h * (a * u + 0.5 * (b - a) * u * u);
        ((self.cumulative[k] + partial) / self.total).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs())
    })
}

/// Largest marginal KS distance between `points` and `rho` over all axes.
pub fn ks_distance(grid: &Grid, rho: &[f64], points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Sampling("no samples to compare".into()));
    }
    let mut worst = 0.0f64;
    for a in 0..grid.dim() {
        let m = MarginalCdf::new(grid, rho, a)?;
        let xs: Vec<f64> = points.iter().map(|p| p[a]).collect();
        worst = worst.max(ks_statistic(&xs, |x| m.cdf(x)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivarianceReport {
    pub ks_distance: f64,
    /// KS distance of the initial samples against the initial density.
    pub baseline_ks: f64,
    pub truncated_fraction: f64,
    pub particles: usize,
    pub final_time: f64,
}

/// Samples `|ψ₀|²`, evolves both the state and the ensemble, and compares the
/// final ensemble with `|ψ(T)|²`.
pub fn equivariance_test(
    h: &DifferentialOperator,
    psi0: &GridState,
    spec: &EvolutionSpec,
    particles: usize,
    seed: u64,
    substeps: usize,
) -> Result<EquivarianceReport> {
    let table = CurrentTable::derive(h)?;
    let ev = evolve(h, psi0, spec)?;
    let rho0 = psi0.density();
    let ens = sample_density(&psi0.grid, &rho0, particles, seed)?;
    let baseline_ks = ks_distance(&psi0.grid, &rho0, &ens.positions)?;
    let traj = integrate_trajectories(&ev.snapshots, &table, &ens, substeps)?;
    let truncated_fraction = traj.truncated_fraction();
    if truncated_fraction > MAX_TRUNCATED_FRACTION {
        return Err(Error::Sampling(format!(
            "{:.1}% of trajectories were truncated at nodes; report invalid",
            100.0 * truncated_fraction
        )));
    }
    let last = ev.last();
    let ks = ks_distance(&last.grid, &last.density(), &traj.survivors())?;
    Ok(EquivarianceReport { ks_distance: ks, baseline_ks, truncated_fraction, particles, final_time: last.t })
}

/// Pointwise wavefunction interpolation, used for diagnostics.
pub fn interpolate_state(psi: &GridState, q: &[f64]) -> Complex64 {
    let re: Vec<f64> = psi.values.iter().map(|z| z.re).collect();
    let im: Vec<f64> = psi.values.iter().map(|z| z.im).collect();
    Complex64::new(psi.grid.interpolate(&re, q), psi.grid.interpolate(&im, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Preset, StateSpec};
    use std::f64::consts::PI;

    fn op(terms: &[(&str, &str)]) -> DifferentialOperator {
        DifferentialOperator::from_strs(1, terms).unwrap()
    }

    #[test]
    fn plane_wave_velocity() {
        let k = 1.0;
        let g = Grid::cube(1, 64, 0.0, 8.0 * PI).unwrap();
        let psi = StateSpec::single(Preset::PlaneWave { k: vec![k] }).build(&g).unwrap();
        let h = op(&[("[2]", "-0.5")]);
        let j = CurrentTable::derive(&h).unwrap().eval(&psi, 0.0).unwrap();
        let v = velocity(&psi, &j, &[3.3]).unwrap();
        assert!((v[0] - k).abs() < 1e-10);
    }

    #[test]
    fn node_is_reported() {
        let g = Grid::cube(1, 64, -8.0, 16.0).unwrap();
        let psi = GridState::from_fn(&g, 0.0, |q| Complex64::new(q[0] * (-q[0] * q[0]).exp(), 0.0));
        let j = VectorField::zeros(&g);
        assert!(matches!(velocity(&psi, &j, &[0.0]), Err(Error::Node { .. })));
        assert!(velocity(&psi, &j, &[1.0]).is_ok());
        assert!(velocity(&psi, &j, &[100.0]).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_hot_cell_is_local() {
        let g = Grid::cube(2, 16, 0.0, 16.0).unwrap();
        let mut rho = vec![0.0; g.len()];
        rho[5 * 16 + 9] = 1.0;
        let a = sample_density(&g, &rho, 500, 3).unwrap();
        let b = sample_density(&g, &rho, 500, 3).unwrap();
        assert_eq!(a, b);
        for p in &a.positions {
            assert!((p[0] - 5.0).abs() <= 1.0 && (p[1] - 9.0).abs() <= 1.0, "{p:?}");
        }
        assert!(matches!(sample_density(&g, &vec![0.0; g.len()], 1, 0), Err(Error::Sampling(_))));
    }

    #[test]
    fn uniform_density_passes_ks() {
        let g = Grid::cube(2, 16, -1.0, 2.0).unwrap();
        let rho = vec![1.0; g.len()];
        let m = 4000;
        let ens = sample_density(&g, &rho, m, 17).unwrap();
        let d = ks_distance(&g, &rho, &ens.positions).unwrap();
        assert!(d < 1.63 / (m as f64).sqrt(), "{d}");
    }

    #[test]
    fn ks_statistic_of_perfect_quantiles() {
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn marginal_cdf_is_monotone_and_normalised() {
        let g = Grid::new(vec![32, 8], vec![-4.0, 0.0], vec![8.0, 1.0]).unwrap();
        let rho: Vec<f64> = (0..g.len()).map(|i| (-g.point(i)[0].powi(2)).exp()).collect();
        let m = MarginalCdf::new(&g, &rho, 0).unwrap();
        let mut last = 0.0;
        for k in 0..=200 {
            let x = -4.0 + 8.0 * k as f64 / 200.0;
            let c = m.cdf(x);
            assert!(c >= last - 1e-15);
            last = c;
        }
        assert!((m.cdf(4.0) - 1.0).abs() < 1e-12);
        assert!((m.cdf(0.0) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn stationary_real_state_does_not_move() {
        let g = Grid::cube(1, 128, -10.0, 20.0).unwrap();
        let h = op(&[("[2]", "-0.5"), ("[0]", "0.5*q1^2")]);
        let psi = StateSpec::single(Preset::HarmonicOscillator { n: vec![0], omega: 1.0, center: vec![0.0] })
            .build(&g)
            .unwrap();
        let ev = evolve(&h, &psi, &EvolutionSpec::new(1e-3, 200, 50)).unwrap();
        let table = CurrentTable::derive(&h).unwrap();
        let ens = sample_density(&g, &psi.density(), 50, 1).unwrap();
        let traj = integrate_trajectories(&ev.snapshots, &table, &ens, 4).unwrap();
        for (a, b) in traj.positions[0].iter().zip(traj.positions.last().unwrap()) {
            assert!((a[0] - b[0]).abs() < 1e-10);
        }
    }
}
