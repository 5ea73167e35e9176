//! Configuration, experiment runner, validation suite and benchmark behind
//! the `slmc` command line.

pub mod bench;
pub mod config;
pub mod run;
pub mod validate;

use std::path::Path;

use crate::error::{Result, SlmcError};
use crate::metrics::MetricRow;

pub use config::ExperimentConfig;
pub use run::{default_output_root, run_experiment, RunSummary, OUTPUT_ROOT_ENV};

/// Reads `metrics.csv` from a run directory.
pub fn read_metrics(run_dir: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(run_dir.join("metrics.csv"))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MetricRow::CSV_HEADER => {}
        _ => {
            return Err(SlmcError::Parse {
                line: 1,
                msg: format!("expected header {:?}", MetricRow::CSV_HEADER),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.parse().map_err(|e| match e {
                SlmcError::Parse { msg, .. } => SlmcError::Parse { line: i + 1, msg },
                other => other,
            })
        })
        .collect()
}

/// Mean cross entropy and acceptance over the first and last `frac` of rows.
pub fn metrics_report(rows: &[MetricRow], frac: f64) -> String {
    if rows.is_empty() {
        return "no metric rows\n".into();
    }
    let k = ((rows.len() as f64 * frac).ceil() as usize).clamp(1, rows.len());
    let mean = |rs: &[MetricRow], f: fn(&MetricRow) -> f64| rs.iter().map(f).sum::<f64>() / rs.len() as f64;
    let (first, last) = (&rows[..k], &rows[rows.len() - k..]);
    let mut out = format!("rows {}, steps {}..={}\n", rows.len(), rows[0].step, rows[rows.len() - 1].step);
    out.push_str(&format!(
        "{:<18}{:>14}{:>14}\n{:<18}{:>14.6}{:>14.6}\n{:<18}{:>14.6}{:>14.6}\n",
        "",
        "first",
        "last",
        "cross_entropy",
        mean(first, |r| r.cross_entropy),
        mean(last, |r| r.cross_entropy),
        "acceptance_ratio",
        mean(first, |r| r.acceptance_ratio),
        mean(last, |r| r.acceptance_ratio),
    ));
    if rows.iter().all(|r| r.wasserstein.is_some()) {
        out.push_str(&format!(
            "{:<18}{:>14.6}{:>14.6}\n",
            "wasserstein",
            mean(first, |r| r.wasserstein.unwrap_or(0.0)),
            mean(last, |r| r.wasserstein.unwrap_or(0.0)),
        ));
    }
    out
}
