use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::trainer::{ConvergenceCurve, CurvePoint};

use super::experiment::read_cell;
use super::{EvalError, EvalReport, ExperimentConfig, ReportMeta, ReportRow};

#[derive(Serialize, Deserialize)]
struct CurveRecord {
    iteration: usize,
    #[serde(rename = "J_mean")]
    j_mean: f64,
    #[serde(rename = "J_std")]
    j_std: f64,
    wallclock_s: f64,
}

const CURVE_HEADER: [&str; 4] = ["iteration", "J_mean", "J_std", "wallclock_s"];

/// CSV with header `iteration,J_mean,J_std,wallclock_s`.
pub fn emit_curve(curve: &ConvergenceCurve, path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    if curve.points.is_empty() {
        w.write_record(CURVE_HEADER)?;
    }
    for p in &curve.points {
        w.serialize(CurveRecord {
            iteration: p.iteration,
            j_mean: p.j_mean,
            j_std: p.j_std,
            wallclock_s: p.wallclock_s,
        })?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))?;
    Ok(())
}

pub fn parse_curve(path: &Path) -> Result<ConvergenceCurve, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    let points = r
        .deserialize::<CurveRecord>()
        .map(|rec| {
            rec.map(|c| CurvePoint {
                iteration: c.iteration,
                j_mean: c.j_mean,
                j_std: c.j_std,
                wallclock_s: c.wallclock_s,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(ConvergenceCurve { points })
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    meta: ReportMeta,
    config: ExperimentConfig,
}

/// Rows as CSV at `path`, metadata and the full configuration as JSON next to
/// it (same stem, `.json`).
pub fn emit_report(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    emit_rows(&report.rows, path)?;
    let side = path.with_extension("json");
    let text = serde_json::to_string_pretty(&Sidecar {
        meta: report.meta.clone(),
        config: report.config.clone(),
    })?;
    std::fs::write(&side, text).map_err(|e| EvalError::io(&side, e))
}

pub fn emit_rows(rows: &[ReportRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "origin",
            "destination",
            "multiplier",
            "budget",
            "t_let",
            "variant",
            "seed",
            "j",
            "stderr",
            "samples",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))?;
    Ok(())
}

pub fn parse_report(path: &Path) -> Result<Vec<ReportRow>, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Rows of every finished cell file in `dir`, sorted by OD pair, variant,
/// seed and multiplier.
pub fn read_report_dir(dir: &Path) -> Result<Vec<ReportRow>, EvalError> {
    let mut rows = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| EvalError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| EvalError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("cell-") && name.ends_with(".json") && !name.ends_with("-checkpoint.json")
        {
            if let Some(cell) = read_cell(&path)? {
                rows.extend(cell.rows);
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.origin, a.destination, &a.variant, a.seed)
            .cmp(&(b.origin, b.destination, &b.variant, b.seed))
            .then(a.multiplier.total_cmp(&b.multiplier))
    });
    Ok(rows)
}
