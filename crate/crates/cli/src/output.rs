//! Artifact writers.  Every file lands via a temp file in the target
//! directory followed by a rename, so concurrent tasks and interrupted runs
//! never leave a half-written table behind.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ebm2_core::{RunStatus, TrajectoryRecord};
use serde::Serialize;

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Builds a CSV in memory (headers + rows of display-formatted cells) and
/// writes it atomically.  Floats go through the shortest round-trip
/// formatting, so identical data means identical bytes.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
    path: PathBuf,
}

impl Table {
    pub fn new(path: PathBuf, headers: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(headers)?;
        Ok(Self { writer, path })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        self.writer.write_record(cells)?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let bytes = self.writer.into_inner()?;
        atomic_write(&self.path, &bytes)
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() { format!("{v}") } else { format!("{v:?}") }
}

pub fn status_str(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Completed => "completed",
        RunStatus::BlewUp => "blew_up",
        RunStatus::StiffnessFailure => "stiffness_failure",
    }
}

/// Long-form coefficient table: one row per (snapshot, mode, field).
pub fn write_coeffs(path: PathBuf, record: &TrajectoryRecord) -> Result<()> {
    let mut table = Table::new(path, &["t", "mode", "field", "coeff"])?;
    for (k, state) in record.states.iter().enumerate() {
        let t = fmt_f64(record.times[k]);
        for (field, coeffs) in [("t_a", state.t_a.coeffs()), ("t_s", state.t_s.coeffs())] {
            for (mode, c) in coeffs.iter().enumerate() {
                table.row(&[t.clone(), mode.to_string(), field.to_string(), fmt_f64(*c)])?;
            }
        }
    }
    table.finish()
}

/// Nodal table: one row per (snapshot, quadrature node).
pub fn write_nodal(path: PathBuf, record: &TrajectoryRecord) -> Result<()> {
    let mut table = Table::new(path, &["t", "x", "t_a", "t_s"])?;
    for (k, state) in record.states.iter().enumerate() {
        let t = fmt_f64(record.times[k]);
        let nodes = state.grid().nodes().to_vec();
        let a = state.t_a.synthesize();
        let s = state.t_s.synthesize();
        for j in 0..nodes.len() {
            table.row(&[t.clone(), fmt_f64(nodes[j]), fmt_f64(a[j]), fmt_f64(s[j])])?;
        }
    }
    table.finish()
}

pub fn write_energy(path: PathBuf, record: &TrajectoryRecord) -> Result<()> {
    let mut table = Table::new(path, &["t", "e_h", "e_v"])?;
    for (k, (e_h, e_v)) in record.energies.iter().enumerate() {
        table.row(&[fmt_f64(record.times[k]), fmt_f64(*e_h), fmt_f64(*e_v)])?;
    }
    table.finish()
}
