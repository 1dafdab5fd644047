//! Run settings: command-line flags override state-file settings, which
//! override the defaults below.

use std::collections::BTreeMap;
use std::str::FromStr;

use guidance_core::Grid;

use crate::CliError;

pub const DEFAULT_DOMAIN: (f64, f64) = (-10.0, 10.0);
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_STRIDE: usize = 100;
pub const DEFAULT_SUBSTEPS: usize = 4;
pub const DEFAULT_PARTICLES: usize = 5000;
pub const DEFAULT_MAX_KS: f64 = 0.05;

pub fn default_points(dim: usize) -> usize {
    match dim {
        1 => 256,
        2 => 64,
        _ => 32,
    }
}

/// Settings read from a state file, keyed by name with their line numbers.
pub struct FileSettings {
    entries: BTreeMap<String, (usize, String)>,
}

impl FileSettings {
    pub fn new(entries: BTreeMap<String, (usize, String)>) -> Self {
        FileSettings { entries }
    }

    /// Flag value if given, else the file setting, else `None`. Unknown keys
    /// are rejected by [`FileSettings::check_keys`].
    pub fn pick<T>(&self, flag: Option<T>, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            Some((line, text)) => parse(text)
                .map(Some)
                .map_err(|e| CliError::Usage(format!("state file line {line}: `{key}`: {e}"))),
            None => Ok(None),
        }
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        for (key, (line, _)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "state file line {line}: unknown setting `{key}` (expected one of {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_num<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| format!("invalid value `{}`: {e}", s.trim()))
}

/// `N` for every axis or `N1,N2,..` per axis.
pub fn parse_points(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(parse_num::<usize>).collect()
}

/// `a:b` for every axis or `a:b,c:d,..` per axis.
pub fn parse_domain(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split(',')
        .map(|part| {
            let (a, b) = part.split_once(':').ok_or_else(|| format!("expected `lower:upper`, found `{}`", part.trim()))?;
            let (a, b) = (parse_num::<f64>(a)?, parse_num::<f64>(b)?);
            if !(b > a) {
                return Err(format!("empty interval {a}:{b}"));
            }
            Ok((a, b))
        })
        .collect()
}

fn per_axis<T: Clone>(values: Vec<T>, dim: usize, what: &str) -> Result<Vec<T>, CliError> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); dim]),
        n if n == dim => Ok(values),
        n => Err(CliError::Usage(format!("{what} has {n} entries for a {dim}-dimensional problem"))),
    }
}

pub fn build_grid(dim: usize, points: Option<Vec<usize>>, domain: Option<Vec<(f64, f64)>>) -> Result<Grid, CliError> {
    let points = per_axis(points.unwrap_or_else(|| vec![default_points(dim)]), dim, "--grid")?;
    let domain = per_axis(domain.unwrap_or_else(|| vec![DEFAULT_DOMAIN]), dim, "--domain")?;
    let lower = domain.iter().map(|d| d.0).collect();
    let length = domain.iter().map(|d| d.1 - d.0).collect();
    Grid::new(points, lower, length).map_err(|e| CliError::Usage(e.to_string()))
}
