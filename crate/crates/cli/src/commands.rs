use std::fs;
use std::io::BufWriter;
use std::path::Path;

use guidance_core::altcurrent::{born_jordan_current, compare_fields, second_order_current};
use guidance_core::current::eval_current_direct;
use guidance_core::epstein::nonlocal_current;
use guidance_core::io::{write_snapshot_csv, write_snapshot_json, write_trajectories_csv, FieldJson};
use guidance_core::state::parse_state_file;
use guidance_core::trajectory::{equivariance_test, integrate_trajectories, sample_density, Trajectories};
use guidance_core::{
    evolve, parse_hamiltonian, CurrentTable, DifferentialOperator, Error, EvolutionSpec, GridState, SampleSpec,
    VectorField,
};
use serde_json::json;

use crate::config::{self, parse_domain, parse_num, parse_points, FileSettings};
use crate::svg::{line_plot, Series};
use crate::{CliError, Format, GridFlags, ReportFormat, RunFlags};

const SETTING_KEYS: [&str; 11] =
    ["grid", "domain", "dt", "steps", "stride", "seed", "substeps", "trajectories", "particles", "time", "max_ks"];

/// Trajectories drawn in the fan plot.
const MAX_PLOTTED_TRAJECTORIES: usize = 200;
const MAX_PLOTTED_SNAPSHOTS: usize = 8;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_hamiltonian(path: &Path) -> Result<DifferentialOperator, CliError> {
    parse_hamiltonian(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("cannot write {}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

struct Problem {
    h: DifferentialOperator,
    psi: GridState,
    settings: FileSettings,
}

fn load_problem(hamiltonian: &Path, state: &Path, grid: &GridFlags) -> Result<Problem, CliError> {
    let h = load_hamiltonian(hamiltonian)?;
    let parsed = parse_state_file(&read(state)?).map_err(|e| CliError::Usage(format!("{}: {e}", state.display())))?;
    let settings = FileSettings::new(parsed.settings);
    settings.check_keys(&SETTING_KEYS)?;
    let spec = parsed
        .spec
        .ok_or_else(|| CliError::Usage(format!("{}: no `state` line", state.display())))?;
    let points = settings.pick(flag(&grid.grid, parse_points, "grid")?, "grid", parse_points)?;
    let domain = settings.pick(flag(&grid.domain, parse_domain, "domain")?, "domain", parse_domain)?;
    let g = config::build_grid(h.dim(), points, domain)?;
    let psi = spec.build(&g).map_err(|e| match e {
        Error::Precondition(m) => CliError::Usage(format!("{}: {m}", state.display())),
        other => other.into(),
    })?;
    Ok(Problem { h, psi, settings })
}

fn flag<T>(v: &Option<String>, parse: fn(&str) -> Result<T, String>, name: &str) -> Result<Option<T>, CliError> {
    v.as_deref().map(parse).transpose().map_err(|e| CliError::Usage(format!("--{name}: {e}")))
}

struct Run {
    evolution: EvolutionSpec,
    seed: u64,
    substeps: usize,
}

fn run_settings(settings: &FileSettings, run: &RunFlags, time: Option<f64>) -> Result<Run, CliError> {
    let dt = settings.pick(run.dt, "dt", parse_num)?.unwrap_or(config::DEFAULT_DT);
    let time = settings.pick(time, "time", parse_num::<f64>)?;
    let steps = match (run.steps, time) {
        (Some(s), _) => s,
        (None, Some(t)) => {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Usage(format!("time must be positive, got {t}")));
            }
            (t / dt).round().max(1.0) as usize
        }
        (None, None) => settings.pick(None, "steps", parse_num)?.unwrap_or(config::DEFAULT_STEPS),
    };
    let stride = settings.pick(run.stride, "stride", parse_num)?.unwrap_or(config::DEFAULT_STRIDE);
    if !(dt > 0.0 && dt.is_finite()) || steps == 0 || stride == 0 {
        return Err(CliError::Usage("dt, steps and stride must be positive".into()));
    }
    Ok(Run {
        evolution: EvolutionSpec::new(dt, steps, stride),
        seed: settings.pick(run.seed, "seed", parse_num)?.unwrap_or(0),
        substeps: settings.pick(run.substeps, "substeps", parse_num)?.unwrap_or(config::DEFAULT_SUBSTEPS).max(1),
    })
}

pub fn check(path: &Path) -> Result<(), CliError> {
    let h = load_hamiltonian(path)?;
    let slots = h.hermiticity_violations(&SampleSpec::default())?;
    if slots.is_empty() {
        println!("hermitian: yes ({} terms, order {})", h.terms().len(), h.max_order());
        return Ok(());
    }
    println!("hermitian: no");
    let adjoint = h.adjoint();
    for n in &slots {
        let show = |op: &DifferentialOperator| op.coefficient(n).map_or("0".to_string(), |c| c.to_string());
        println!("  slot {n}: h = {}, adjoint = {}", show(&h), show(&adjoint));
    }
    let list: Vec<String> = slots.iter().map(|n| n.to_string()).collect();
    Err(CliError::Verdict(format!("operator is not Hermitian; violated slots {}", list.join(", "))))
}

pub fn derive(path: &Path, format: Format, hermitize: bool, out: Option<&Path>) -> Result<(), CliError> {
    let mut h = load_hamiltonian(path)?;
    if hermitize {
        h = h.hermitize();
    }
    let table = CurrentTable::derive(&h).map_err(|e| match e {
        Error::NotHermitian { .. } => CliError::Verdict(format!("{e}; rerun with --hermitize to use (H + H†)/2")),
        other => other.into(),
    })?;
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&table.to_json()).expect("table serializes") + "\n",
        Format::Latex => table.to_latex(),
    };
    match out {
        Some(p) => write_file(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn marginal(psi: &GridState) -> Series {
    let g = &psi.grid;
    let rho = psi.density();
    let weight = g.cell_volume() / g.spacing(0);
    let mut y = vec![0.0; g.shape()[0]];
    for (i, r) in rho.iter().enumerate() {
        y[g.unravel(i)[0]] += r * weight;
    }
    Series { x: g.axis_points(0), y }
}

fn trajectory_series(traj: &Trajectories) -> Vec<Series> {
    let count = traj.truncated_at.len();
    let step = count.div_ceil(MAX_PLOTTED_TRAJECTORIES).max(1);
    (0..count)
        .step_by(step)
        .map(|p| {
            let (x, y) = traj
                .times
                .iter()
                .zip(&traj.positions)
                .filter(|(t, _)| traj.truncated_at[p].is_none_or(|tc| **t < tc))
                .map(|(t, pos)| (*t, pos[p][0]))
                .unzip();
            Series { x, y }
        })
        .collect()
}

pub fn simulate(
    hamiltonian: &Path,
    state: &Path,
    run: &RunFlags,
    trajectories: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let Problem { h, psi, settings } = load_problem(hamiltonian, state, &run.grid)?;
    let cfg = run_settings(&settings, run, None)?;
    let particles = settings.pick(trajectories, "trajectories", parse_num)?.unwrap_or(0);
    let table = CurrentTable::derive(&h)?;
    let ev = evolve(&h, &psi, &cfg.evolution)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    for (k, snap) in ev.snapshots.iter().enumerate() {
        let p = out.join(format!("snapshot_{k:04}.json"));
        write_snapshot_json(create(&p)?, snap).map_err(|e| io_err(&p, e))?;
    }
    let last = ev.last();
    let p = out.join("final.csv");
    write_snapshot_csv(create(&p)?, last).map_err(|e| io_err(&p, e))?;
    let current: VectorField = table.eval(last, last.t)?;
    let p = out.join("current.json");
    serde_json::to_writer(create(&p)?, &FieldJson::from_field(&current)).map_err(|e| io_err(&p, e))?;

    let every = ev.snapshots.len().div_ceil(MAX_PLOTTED_SNAPSHOTS).max(1);
    let mut curves: Vec<Series> = ev.snapshots.iter().step_by(every).map(marginal).collect();
    if (ev.snapshots.len() - 1) % every != 0 {
        curves.push(marginal(last));
    }
    write_file(&out.join("density.svg"), &line_plot("|psi|^2 (marginal on q1)", "q1", "density", &curves))?;

    let mut truncated = None;
    if particles > 0 {
        let ens = sample_density(&psi.grid, &psi.density(), particles, cfg.seed)?;
        let traj = integrate_trajectories(&ev.snapshots, &table, &ens, cfg.substeps)?;
        let p = out.join("trajectories.csv");
        write_trajectories_csv(create(&p)?, &traj).map_err(|e| io_err(&p, e))?;
        write_file(&out.join("trajectories.svg"), &line_plot("guided trajectories", "t", "q1", &trajectory_series(&traj)))?;
        truncated = Some(traj.truncated_fraction());
    }

    let summary = json!({
        "dim": h.dim(),
        "shape": psi.grid.shape(),
        "dt": cfg.evolution.dt,
        "steps": cfg.evolution.steps,
        "snapshots": ev.snapshots.len(),
        "final_time": last.t,
        "max_norm_drift": ev.max_norm_drift(),
        "trajectories": particles,
        "truncated_fraction": truncated,
    });
    write_file(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;
    println!("snapshots: {} (t = 0 .. {})", ev.snapshots.len(), last.t);
    println!("max norm drift: {:.3e}", ev.max_norm_drift());
    if let Some(f) = truncated {
        println!("trajectories: {particles}, truncated fraction: {f:.4}");
    }
    println!("output: {}", out.display());
    Ok(())
}

const METHODS: [&str; 5] = ["canonical", "direct", "epstein", "born-jordan", "second-order"];

pub fn compare(hamiltonian: &Path, state: &Path, methods: &str, format: ReportFormat, grid: &GridFlags) -> Result<(), CliError> {
    let names: Vec<&str> = methods.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(CliError::Usage("--methods lists no methods".into()));
    }
    if let Some(bad) = names.iter().find(|m| !METHODS.contains(m)) {
        return Err(CliError::Usage(format!("unknown method `{bad}` (expected {})", METHODS.join(", "))));
    }
    let Problem { h, psi, .. } = load_problem(hamiltonian, state, grid)?;
    h.require_hermitian()?;
    let t = psi.t;
    let mut fields: Vec<(&str, VectorField)> = Vec::new();
    let mut status = serde_json::Map::new();
    let mut failed = false;
    for &name in &names {
        let r = match name {
            "canonical" => CurrentTable::derive(&h).and_then(|tb| tb.eval(&psi, t)),
            "direct" => eval_current_direct(&h, &psi, t),
            "epstein" => nonlocal_current(&h, &psi, t),
            "born-jordan" => born_jordan_current(&h, &psi, t),
            _ => second_order_current(&h, &psi, t),
        };
        let entry = match r {
            Ok(f) => {
                let e = json!({"status": "ok", "max_abs": f.max_abs()});
                fields.push((name, f));
                e
            }
            Err(Error::Inapplicable(m)) => json!({"status": "inapplicable", "detail": m}),
            Err(e) => {
                failed = true;
                json!({"status": "error", "detail": e.to_string()})
            }
        };
        status.insert(name.to_string(), entry);
    }
    let mut pairs = Vec::new();
    for a in 0..fields.len() {
        for b in a + 1..fields.len() {
            let c = compare_fields(&fields[a].1, &fields[b].1)?;
            pairs.push(json!({
                "a": fields[a].0, "b": fields[b].0,
                "max_abs_diff": c.max_abs_diff, "max_div_diff": c.max_div_diff,
            }));
        }
    }
    match format {
        ReportFormat::Json => {
            let doc = json!({"t": t, "methods": status, "comparisons": pairs});
            println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        }
        ReportFormat::Text => {
            for name in &names {
                let s = &status[*name];
                match s["status"].as_str() {
                    Some("ok") => println!("{name}: ok, max|j| = {:.6e}", s["max_abs"].as_f64().unwrap_or(f64::NAN)),
                    Some(st) => println!("{name}: {st}: {}", s["detail"].as_str().unwrap_or("")),
                    None => {}
                }
            }
            for p in &pairs {
                println!(
                    "{} vs {}: max_abs_diff = {:.3e}, max_div_diff = {:.3e}",
                    p["a"].as_str().unwrap_or(""),
                    p["b"].as_str().unwrap_or(""),
                    p["max_abs_diff"].as_f64().unwrap_or(f64::NAN),
                    p["max_div_diff"].as_f64().unwrap_or(f64::NAN)
                );
            }
        }
    }
    if failed {
        return Err(CliError::Numerical("at least one method failed".into()));
    }
    Ok(())
}

pub fn equivariance(
    hamiltonian: &Path,
    state: &Path,
    run: &RunFlags,
    particles: Option<usize>,
    time: Option<f64>,
    max_ks: Option<f64>,
    format: ReportFormat,
) -> Result<(), CliError> {
    let Problem { h, psi, settings } = load_problem(hamiltonian, state, &run.grid)?;
    let cfg = run_settings(&settings, run, time)?;
    let particles = settings.pick(particles, "particles", parse_num)?.unwrap_or(config::DEFAULT_PARTICLES);
    let max_ks = settings.pick(max_ks, "max_ks", parse_num)?.unwrap_or(config::DEFAULT_MAX_KS);
    let report = equivariance_test(&h, &psi, &cfg.evolution, particles, cfg.seed, cfg.substeps)?;
    match format {
        ReportFormat::Json => {
            let doc = json!({
                "ks_distance": report.ks_distance,
                "baseline_ks": report.baseline_ks,
                "truncated_fraction": report.truncated_fraction,
                "particles": report.particles,
                "final_time": report.final_time,
                "seed": cfg.seed,
                "max_ks": max_ks,
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        }
        ReportFormat::Text => {
            println!("particles: {}", report.particles);
            println!("final time: {}", report.final_time);
            println!("KS distance: {:.5}", report.ks_distance);
            println!("sampler baseline KS: {:.5}", report.baseline_ks);
            println!("truncated fraction: {:.4}", report.truncated_fraction);
        }
    }
    if report.ks_distance > max_ks {
        return Err(CliError::Verdict(format!("KS distance {:.5} exceeds {max_ks}", report.ks_distance)));
    }
    Ok(())
}
