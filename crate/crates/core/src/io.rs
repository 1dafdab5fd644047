//! Snapshot, field and trajectory files.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::grid::{Grid, GridState, VectorField};
use crate::trajectory::Trajectories;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotJson {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub lower: Vec<f64>,
    pub length: Vec<f64>,
    pub t: f64,
    /// Row-major, last axis fastest, as `[re, im]` pairs.
    pub values: Vec<[f64; 2]>,
}

impl SnapshotJson {
    pub fn from_state(s: &GridState) -> Self {
        SnapshotJson {
            dim: s.dim(),
            shape: s.grid.shape().to_vec(),
            lower: s.grid.lower().to_vec(),
            length: s.grid.length().to_vec(),
            t: s.t,
            values: s.values.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn to_state(&self) -> Result<GridState> {
        check_dim(self.dim, self.shape.len())?;
        let grid = Grid::new(self.shape.clone(), self.lower.clone(), self.length.clone())?;
        let values = self.values.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
        GridState::new(grid, values, self.t)
    }
}

pub fn write_snapshot_json(w: impl Write, s: &GridState) -> Result<()> {
    serde_json::to_writer(w, &SnapshotJson::from_state(s))?;
    Ok(())
}

pub fn read_snapshot_json(r: impl Read) -> Result<GridState> {
    let doc: SnapshotJson = serde_json::from_reader(r)?;
    doc.to_state()
}

/// Columns `q1..qN,re,im`, one row per grid point.
pub fn write_snapshot_csv(w: impl Write, s: &GridState) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=s.dim()).map(|a| format!("q{a}")).collect();
    header.extend(["re".into(), "im".into()]);
    out.write_record(&header).map_err(csv_err)?;
    for (i, z) in s.values.iter().enumerate() {
        let mut row: Vec<String> = s.grid.point(i).iter().map(|x| x.to_string()).collect();
        row.push(z.re.to_string());
        row.push(z.im.to_string());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldJson {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub lower: Vec<f64>,
    pub length: Vec<f64>,
    pub components: Vec<Vec<f64>>,
}

impl FieldJson {
    pub fn from_field(f: &VectorField) -> Self {
        FieldJson {
            dim: f.grid.dim(),
            shape: f.grid.shape().to_vec(),
            lower: f.grid.lower().to_vec(),
            length: f.grid.length().to_vec(),
            components: f.components.clone(),
        }
    }

    pub fn to_field(&self) -> Result<VectorField> {
        let grid = Grid::new(self.shape.clone(), self.lower.clone(), self.length.clone())?;
        check_dim(self.dim, grid.dim())?;
        check_dim(self.dim, self.components.len())?;
        for c in &self.components {
            check_dim(grid.len(), c.len())?;
        }
        Ok(VectorField { grid, components: self.components.clone() })
    }
}

/// Header `t,particle_id,q1..qN,truncated`, one row per particle per time.
pub fn write_trajectories_csv(w: impl Write, traj: &Trajectories) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = traj.positions.first().and_then(|p| p.first()).map_or(0, Vec::len);
    let mut header = vec!["t".to_string(), "particle_id".to_string()];
    header.extend((1..=dim).map(|a| format!("q{a}")));
    header.push("truncated".into());
    out.write_record(&header).map_err(csv_err)?;
    for (k, &t) in traj.times.iter().enumerate() {
        for (p, q) in traj.positions[k].iter().enumerate() {
            let cut = traj.truncated_at[p].is_some_and(|tc| tc <= t);
            let mut row = vec![t.to_string(), p.to_string()];
            row.extend(q.iter().map(|x| x.to_string()));
            row.push(u8::from(cut).to_string());
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::new(std::io::ErrorKind::Other, format!("{other:?}"))),
    }
}
