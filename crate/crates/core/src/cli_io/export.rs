//! CSV and JSON artifacts. Floats are written in shortest round-trip form;
//! non-finite values are refused rather than written.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::kinematics::{determinant, Matrix};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation(format!("refusing to write a non-finite {what}")));
    }
    Ok(())
}

/// One line of `diagnostics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub kinetic: f64,
    pub stored: f64,
    pub dissipated_step: f64,
    pub work_step: f64,
    pub balance_residual: f64,
    pub mass: f64,
    pub min_det: f64,
}

impl DiagnosticsRow {
    fn values(&self) -> [f64; 8] {
        [
            self.t,
            self.kinetic,
            self.stored,
            self.dissipated_step,
            self.work_step,
            self.balance_residual,
            self.mass,
            self.min_det,
        ]
    }
}

/// Streams rows, flushing each one so a crashed run leaves a usable prefix.
pub struct DiagnosticsWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let writer = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        Ok(DiagnosticsWriter { path: path.to_path_buf(), writer })
    }

    pub fn write(&mut self, row: &DiagnosticsRow) -> Result<()> {
        ensure_finite(&row.values(), "diagnostic")?;
        self.writer.serialize(row).map_err(|e| io_err(&self.path, e))?;
        self.writer.flush().map_err(|e| io_err(&self.path, e))
    }
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| io_err(path, e))).collect()
}

/// Field values at one quadrature point.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub det_f: f64,
    pub zeta: f64,
    pub mu: f64,
}

/// Evaluate (y, det ∇y, ζ, μ) at every quadrature point.
pub fn snapshot_rows(disc: &Discretization, y: &[f64], zeta: &[f64], mu: &[f64]) -> Vec<SnapshotRow> {
    let (ds, ss) = (&disc.deformation, &disc.scalar);
    let d = ds.dim();
    let ny = ds.n_basis();
    let mut rows = Vec::new();
    for (ed, es) in ds.elements().iter().zip(ss.elements()) {
        debug_assert_eq!(ed.index, es.index);
        for (qd, qs) in ed.points.iter().zip(&es.points) {
            let mut yv = vec![0.0; d];
            let mut f = Matrix::zeros(d);
            for (il, b) in qd.basis.iter().enumerate() {
                let i = ed.dofs[il];
                for a in 0..d {
                    let c = y[a * ny + i];
                    yv[a] += c * b.v;
                    for j in 0..d {
                        f[(a, j)] += c * b.d1[j];
                    }
                }
            }
            let (mut z, mut m) = (0.0, 0.0);
            for (i, b) in es.dofs.iter().zip(&qs.basis) {
                z += zeta[*i] * b.v;
                m += mu[*i] * b.v;
            }
            rows.push(SnapshotRow { x: qd.x[..d].to_vec(), y: yv, det_f: determinant(&f), zeta: z, mu: m });
        }
    }
    rows
}

fn snapshot_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    h.extend((0..d).map(|a| format!("y{a}")));
    h.extend(["det_F", "zeta", "mu"].map(String::from));
    h
}

pub fn write_snapshot(path: &Path, d: usize, rows: &[SnapshotRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(snapshot_header(d)).map_err(|e| io_err(path, e))?;
    for r in rows {
        let mut rec: Vec<f64> = r.x.clone();
        rec.extend(&r.y);
        rec.extend([r.det_f, r.zeta, r.mu]);
        ensure_finite(&rec, "snapshot value")?;
        w.serialize(rec).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Vec<SnapshotRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| io_err(path, e))?.clone();
    let d = match header.len() {
        5 => 1,
        7 => 2,
        n => return Err(io_err(path, format!("unexpected snapshot width {n}"))),
    };
    if header.iter().collect::<Vec<_>>() != snapshot_header(d) {
        return Err(io_err(path, "unexpected snapshot header"));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<Vec<f64>>() {
        let v = rec.map_err(|e| io_err(path, e))?;
        rows.push(SnapshotRow {
            x: v[..d].to_vec(),
            y: v[d..2 * d].to_vec(),
            det_f: v[2 * d],
            zeta: v[2 * d + 1],
            mu: v[2 * d + 2],
        });
    }
    Ok(rows)
}

/// Header plus rows of serializable records (used for small tables).
pub fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Whitespace/comma separated numbers, `#` comments allowed.
pub fn read_coefficients(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            out.push(tok.parse::<f64>().map_err(|e| Error::Parse(format!("{}: `{tok}`: {e}", path.display())))?);
        }
    }
    ensure_finite(&out, "coefficient")?;
    Ok(out)
}
