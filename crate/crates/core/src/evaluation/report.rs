//! Report files: per-order CSV and a JSON summary with fixed column names.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::evaluation::metrics::MetricsReport;

/// Summary JSON schema; field names are part of the interface.
#[derive(Debug, Serialize)]
struct Summary<'a> {
    eg_bp: f64,
    arr_pct: f64,
    pos: f64,
    glr: Option<f64>,
    toc_pct: f64,
    violation_rate: f64,
    eg_bp_fulfilled_only: f64,
    n_orders: usize,
    n_episodes: usize,
    config_digest: &'a str,
}

pub fn write_summary_json(path: &Path, report: &MetricsReport) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(
        file,
        &Summary {
            eg_bp: report.eg_bp,
            arr_pct: report.arr_pct,
            pos: report.pos,
            glr: report.glr,
            toc_pct: report.toc_pct,
            violation_rate: report.violation_rate,
            eg_bp_fulfilled_only: report.eg_bp_fulfilled_only,
            n_orders: report.n_orders,
            n_episodes: report.n_episodes,
            config_digest: &report.config_digest,
        },
    )?;
    Ok(())
}

/// One row per order: date, asset, direction, amount, aep, eg_bp, fulfilled.
pub fn write_orders_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "date,asset,direction,amount,aep,eg_bp,fulfilled")?;
    for o in &report.per_order {
        writeln!(
            file,
            "{},{},{},{:.12e},{},{},{}",
            o.date,
            o.asset,
            o.direction,
            o.amount,
            o.aep.map(|x| format!("{x:.12e}")).unwrap_or_default(),
            o.eg_bp.map(|x| format!("{x:.6}")).unwrap_or_default(),
            o.fulfilled
        )?;
    }
    Ok(())
}
