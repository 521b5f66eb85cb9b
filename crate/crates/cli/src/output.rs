//! Artifact writers.

use std::path::Path;

use anyhow::{Context, Result};
use ricox::metrics::EvalReport;
use ricox::{Bin, Point};
use serde::Serialize;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}

fn point_fields(p: &Point, dim: usize) -> Vec<String> {
    (0..dim).map(|a| p.0[a].to_string()).collect()
}

/// One row per evaluation point, then a row for the domain integral.
pub fn write_quantiles(
    path: &Path,
    points: &[Point],
    dim: usize,
    report: &EvalReport,
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<&str> = if dim == 1 {
        vec!["point"]
    } else {
        vec!["x", "y"]
    };
    header.extend(["q025", "q25", "q50", "q75", "q975"]);
    w.write_record(&header)?;
    for (p, q) in points.iter().zip(&report.quantiles) {
        let mut row = point_fields(p, dim);
        row.extend(q.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    let mut row = vec!["integral".to_string()];
    row.resize(dim, String::new());
    row.extend(report.integral.iter().map(|v| v.to_string()));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

pub fn write_theta_trace(path: &Path, theta: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["draw", "theta"])?;
    for (i, t) in theta.iter().enumerate() {
        w.write_record([i.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Events in the ingestion format, so they round-trip exactly.
pub fn write_events(path: &Path, events: &[Point], dim: usize) -> Result<()> {
    let mut w = writer(path)?;
    if dim == 1 {
        w.write_record(["t"])?;
    } else {
        w.write_record(["x", "y"])?;
    }
    for p in events {
        w.write_record(point_fields(p, dim))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bins(path: &Path, bins: &[Bin], dim: usize) -> Result<()> {
    let mut w = writer(path)?;
    if dim == 1 {
        w.write_record(["start", "end", "count"])?;
    } else {
        w.write_record(["x0", "x1", "y0", "y1", "count"])?;
    }
    for b in bins {
        let mut row = Vec::new();
        for a in 0..dim {
            row.push(b.region.lo[a].to_string());
            row.push(b.region.hi[a].to_string());
        }
        row.push(b.count.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
