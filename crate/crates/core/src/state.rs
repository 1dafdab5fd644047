//! Named initial states and the state-file format.
//!
//! ```text
//! # free packet
//! grid = 256
//! domain = -20:20
//! dt = 0.001
//! state gaussian center=[0] width=[0.5] k=[1]
//! state ho n=[1] amp=0.6,0.2
//! ```
//!
//! Each `state` line is one component; several lines are superposed with
//! their `amp=re[,im]` weights and the sum is normalised. All other
//! `key = value` lines are settings read by the caller.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridState};

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// `exp(-(q-c)²/(4σ²) + i k·q)`; `width` is the density standard deviation.
    Gaussian { center: Vec<f64>, width: Vec<f64>, k: Vec<f64> },
    /// `exp(i k·q)` with unit amplitude.
    PlaneWave { k: Vec<f64> },
    /// Product of eigenstates of `-½∂² + ½ω²(q-c)²` on each axis.
    HarmonicOscillator { n: Vec<u32>, omega: f64, center: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpec {
    pub components: Vec<(Complex64, Preset)>,
}

/// Hermite functions `φ_0..=φ_n` at `x`, normalised on the real line.
pub fn hermite_functions(n: u32, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp());
    if n >= 1 {
        out.push(2f64.sqrt() * x * out[0]);
    }
    for k in 1..n as usize {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

fn expand(v: &[f64], dim: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v.to_vec()),
        n => Err(Error::precondition(format!("{what} has {n} entries for a {dim}-dimensional grid"))),
    }
}

impl Preset {
    pub fn gaussian(center: Vec<f64>, width: Vec<f64>, k: Vec<f64>) -> Self {
        Preset::Gaussian { center, width, k }
    }

    /// Unnormalised samples on `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<GridState> {
        let dim = grid.dim();
        Ok(match self {
            Preset::Gaussian { center, width, k } => {
                let (c, w, k) = (expand(center, dim, "center")?, expand(width, dim, "width")?, expand(k, dim, "k")?);
                if w.iter().any(|&s| s <= 0.0) {
                    return Err(Error::precondition("gaussian width must be positive"));
                }
                GridState::from_fn(grid, 0.0, |q| {
                    let mut arg = Complex64::new(0.0, 0.0);
                    for a in 0..q.len() {
                        let d = q[a] - c[a];
                        arg += Complex64::new(-d * d / (4.0 * w[a] * w[a]), k[a] * q[a]);
                    }
                    arg.exp()
                })
            }
            Preset::PlaneWave { k } => {
                let k = expand(k, dim, "k")?;
                GridState::from_fn(grid, 0.0, |q| {
                    Complex64::new(0.0, q.iter().zip(&k).map(|(x, k)| x * k).sum::<f64>()).exp()
                })
            }
            Preset::HarmonicOscillator { n, omega, center } => {
                if n.len() != dim && n.len() != 1 {
                    return Err(Error::precondition(format!("n has {} entries for a {dim}-dimensional grid", n.len())));
                }
                if *omega <= 0.0 {
                    return Err(Error::precondition("omega must be positive"));
                }
                let n: Vec<u32> = if n.len() == 1 { vec![n[0]; dim] } else { n.clone() };
                let c = expand(center, dim, "center")?;
                let s = omega.sqrt();
                GridState::from_fn(grid, 0.0, |q| {
                    let mut v = 1.0;
                    for a in 0..q.len() {
                        let x = s * (q[a] - c[a]);
                        v *= omega.powf(0.25) * hermite_functions(n[a], x)[n[a] as usize];
                    }
                    Complex64::new(v, 0.0)
                })
            }
        })
    }
}

impl StateSpec {
    pub fn single(p: Preset) -> Self {
        StateSpec { components: vec![(Complex64::new(1.0, 0.0), p)] }
    }

    /// Weighted sum of the components. The sum is normalised unless it
    /// is a single plane wave, which keeps unit amplitude.
    pub fn build(&self, grid: &Grid) -> Result<GridState> {
        if self.components.is_empty() {
            return Err(Error::precondition("state specification has no components"));
        }
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (amp, p) in &self.components {
            let s = p.sample(grid)?;
            values.iter_mut().zip(&s.values).for_each(|(v, x)| *v += amp * x);
        }
        let state = GridState::new(grid.clone(), values, 0.0)?;
        if state.norm_sqr() == 0.0 || !state.is_finite() {
            return Err(Error::precondition("state vanishes on the grid"));
        }
        Ok(match self.components.as_slice() {
            [(_, Preset::PlaneWave { .. })] => state,
            _ => state.normalized(),
        })
    }
}

fn parse_list(text: &str, line: usize) -> Result<Vec<f64>> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::format(line, format!("invalid number `{}`", s.trim()))))
        .collect()
}

fn parse_amp(text: &str, line: usize) -> Result<Complex64> {
    let parts = parse_list(text, line)?;
    match parts.as_slice() {
        [re] => Ok(Complex64::new(*re, 0.0)),
        [re, im] => Ok(Complex64::new(*re, *im)),
        _ => Err(Error::format(line, "amp must be `re` or `re,im`")),
    }
}

fn parse_state_line(rest: &str, line: usize) -> Result<(Complex64, Preset)> {
    let mut words = rest.split_whitespace();
    let kind = words.next().ok_or_else(|| Error::format(line, "missing preset name"))?;
    let mut kv = BTreeMap::new();
    for w in words {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| Error::format(line, format!("expected key=value, found `{w}`")))?;
        if kv.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::format(line, format!("duplicate key `{k}`")));
        }
    }
    let amp = match kv.remove("amp") {
        Some(a) => parse_amp(&a, line)?,
        None => Complex64::new(1.0, 0.0),
    };
    let mut take = |key: &str, default: Option<Vec<f64>>| -> Result<Vec<f64>> {
        match kv.remove(key) {
            Some(v) => parse_list(&v, line),
            None => default.ok_or_else(|| Error::format(line, format!("`{kind}` needs `{key}=`"))),
        }
    };
    let preset = match kind {
        "gaussian" => Preset::Gaussian {
            center: take("center", Some(vec![0.0]))?,
            width: take("width", Some(vec![1.0]))?,
            k: take("k", Some(vec![0.0]))?,
        },
        "plane-wave" => Preset::PlaneWave { k: take("k", None)? },
        "ho" | "ho-eigenstate" => {
            let n = take("n", Some(vec![0.0]))?;
            if n.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
                return Err(Error::format(line, "`n` must be non-negative integers"));
            }
            Preset::HarmonicOscillator {
                n: n.into_iter().map(|x| x as u32).collect(),
                omega: take("omega", Some(vec![1.0]))?[0],
                center: take("center", Some(vec![0.0]))?,
            }
        }
        other => return Err(Error::format(line, format!("unknown preset `{other}`"))),
    };
    if let Some(k) = kv.keys().next() {
        return Err(Error::format(line, format!("unknown key `{k}` for `{kind}`")));
    }
    Ok((amp, preset))
}

/// Settings and state components read from a state file.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFile {
    /// `key -> (line, value)`.
    pub settings: BTreeMap<String, (usize, String)>,
    pub spec: Option<StateSpec>,
}

pub fn parse_state_file(text: &str) -> Result<StateFile> {
    let mut settings = BTreeMap::new();
    let mut components = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix("state ") {
            components.push(parse_state_line(rest, line)?);
        } else if let Some((key, value)) = body.split_once('=') {
            let key = key.trim().to_string();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::format(line, format!("invalid setting name `{key}`")));
            }
            if settings.insert(key.clone(), (line, value.trim().to_string())).is_some() {
                return Err(Error::format(line, format!("duplicate setting `{key}`")));
            }
        } else {
            return Err(Error::format(line, format!("expected `key = value` or `state ...`, found `{body}`")));
        }
    }
    let spec = if components.is_empty() { None } else { Some(StateSpec { components }) };
    Ok(StateFile { settings, spec })
}
