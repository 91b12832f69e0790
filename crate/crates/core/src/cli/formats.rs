//! On-disk formats: field snapshots, diagnostics and study reports.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every finite `f64` exactly. Line endings are LF.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use csv::{ReaderBuilder, Terminator, WriterBuilder};

use crate::error::{CryoError, Result};
use crate::grid::{Field, Grid};
use crate::simulator::mms::MmsReport;
use crate::simulator::{ConvergenceReport, EnergyLedger, StepRecord, SweepReport};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CryoError::io(path, e))?;
    Ok(WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CryoError::io(path, e))
}

/// Snapshot header for a grid of dimension `dim`.
pub fn snapshot_header(dim: usize) -> Vec<&'static str> {
    if dim == 1 {
        vec!["x", "theta", "beta", "xi"]
    } else {
        vec!["x", "y", "theta", "beta", "xi"]
    }
}

pub fn write_snapshot(path: &Path, grid: &Grid, theta: &Field, beta: &Field, xi: &Field) -> Result<()> {
    for f in [theta, beta, xi] {
        grid.check_field(f)?;
    }
    let mut w = writer(path)?;
    w.write_record(snapshot_header(grid.dim()))?;
    for i in 0..grid.node_count() {
        let [x, y] = grid.coords(i);
        let mut row = vec![fmt_f64(x)];
        if grid.dim() == 2 {
            row.push(fmt_f64(y));
        }
        row.extend([theta.values[i], beta.values[i], xi.values[i]].map(fmt_f64));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// A snapshot read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    pub dim: usize,
    pub coords: Vec<[f64; 2]>,
    pub theta: Field,
    pub beta: Field,
    pub xi: Field,
}

impl SnapshotData {
    /// Checks that the snapshot's node coordinates are those of `grid`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.dim != grid.dim() || self.coords.len() != grid.node_count() {
            return Err(CryoError::invalid(format!(
                "snapshot has {} nodes in {}D, grid has {} nodes in {}D",
                self.coords.len(),
                self.dim,
                grid.node_count(),
                grid.dim()
            )));
        }
        let tol = 1e-9 * grid.lengths()[0].max(grid.lengths()[1]);
        for (i, c) in self.coords.iter().enumerate() {
            let g = grid.coords(i);
            if (c[0] - g[0]).abs() > tol || (c[1] - g[1]).abs() > tol {
                return Err(CryoError::invalid(format!(
                    "snapshot node {i} at {c:?} does not match grid node at {g:?}"
                )));
            }
        }
        Ok(())
    }
}

fn parse_cell(s: &str, line: u64, col: &str, path: &Path) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        CryoError::invalid(format!(
            "{}:{line}: column {col}: '{s}' is not a number",
            path.display()
        ))
    })
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotData> {
    let file = File::open(path).map_err(|e| CryoError::io(path, e))?;
    let mut r = ReaderBuilder::new().from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let dim = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "theta", "beta", "xi"] => 1,
        ["x", "y", "theta", "beta", "xi"] => 2,
        _ => {
            return Err(CryoError::invalid(format!(
                "{}: header must be x[,y],theta,beta,xi, got {}",
                path.display(),
                header.join(",")
            )))
        }
    };
    let mut out = SnapshotData {
        dim,
        coords: Vec::new(),
        theta: Field::new(Vec::new()),
        beta: Field::new(Vec::new()),
        xi: Field::new(Vec::new()),
    };
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals = rec
            .iter()
            .zip(&header)
            .map(|(s, h)| parse_cell(s, line, h, path))
            .collect::<Result<Vec<f64>>>()?;
        let (c, rest) = vals.split_at(dim);
        out.coords.push(if dim == 1 { [c[0], 0.0] } else { [c[0], c[1]] });
        out.theta.values.push(rest[0]);
        out.beta.values.push(rest[1]);
        out.xi.values.push(rest[2]);
    }
    Ok(out)
}

pub fn write_diagnostics(path: &Path, ledger: &EnergyLedger) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(StepRecord::HEADER)?;
    for rec in ledger.records() {
        w.write_record(rec.row())?;
    }
    finish(w, path)
}

pub fn write_sweep_report(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "epsilon",
        "theta_gap",
        "beta_gap",
        "final_theta_gap",
        "final_beta_gap",
        "status",
    ])?;
    for e in &report.entries {
        let row = match &e.outcome {
            Ok(g) => vec![
                fmt_f64(e.epsilon),
                fmt_f64(g.theta_gap),
                fmt_f64(g.beta_gap),
                fmt_f64(g.final_theta_gap),
                fmt_f64(g.final_beta_gap),
                "ok".to_string(),
            ],
            Err(msg) => vec![
                fmt_f64(e.epsilon),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("failed: {msg}"),
            ],
        };
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_convergence_report(path: &Path, report: &ConvergenceReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "nodes",
        "h",
        "dt",
        "theta_error",
        "beta_error",
        "theta_rate",
        "beta_rate",
    ])?;
    for l in &report.levels {
        let nodes = l
            .nodes
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("x");
        let err = |v: Option<f64>| v.map_or_else(|| "reference".to_string(), fmt_f64);
        let rate = |v: Option<f64>, e: Option<f64>| match (v, e) {
            (Some(r), _) => fmt_f64(r),
            (None, Some(0.0)) => "exact".to_string(),
            _ => String::new(),
        };
        w.write_record([
            nodes,
            fmt_f64(l.h),
            fmt_f64(l.dt),
            err(l.theta_error),
            err(l.beta_error),
            rate(l.theta_rate, l.theta_error),
            rate(l.beta_rate, l.beta_error),
        ])?;
    }
    finish(w, path)
}

/// Plain-text order table for a manufactured-solution study.
pub fn mms_table(report: &MmsReport) -> String {
    let mut s = String::new();
    for ladder in [&report.space, &report.time] {
        let label = match ladder.refinement {
            crate::simulator::mms::Refinement::Space => "space",
            crate::simulator::mms::Refinement::Time => "time",
        };
        s.push_str(&format!(
            "{label} refinement ({} solution, required order >= {})\n",
            report.preset,
            ladder.threshold()
        ));
        s.push_str(&format!(
            "{:>6} {:>12} {:>12} {:>14} {:>14}\n",
            "nodes", "h", "dt", "theta_error", "beta_error"
        ));
        for l in &ladder.levels {
            s.push_str(&format!(
                "{:>6} {:>12.4e} {:>12.4e} {:>14.6e} {:>14.6e}\n",
                l.nodes, l.h, l.dt, l.theta_error, l.beta_error
            ));
        }
        let show = |o: Option<f64>| o.map_or_else(|| "exact".to_string(), |v| format!("{v:.3}"));
        s.push_str(&format!(
            "order: theta {}  beta {}\n\n",
            show(ladder.theta_order),
            show(ladder.beta_order)
        ));
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| CryoError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CryoError::io(path, e))
}
