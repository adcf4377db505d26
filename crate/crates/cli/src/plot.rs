//! Trace plots. Everything here is computed from trace.csv text alone.

use std::path::Path;

use ace_core::trainer::{read_csv, TraceRow};
use anyhow::{Context, Result};

use crate::svg::{line_chart, Series};

pub const PLOT_FILES: [&str; 4] = ["gamma.svg", "lambda.svg", "u.svg", "eq_error.svg"];

fn per_layer(rows: &[TraceRow], name: &str, pick: fn(&TraceRow) -> &[f64]) -> Vec<Series> {
    let depth = rows.first().map_or(0, TraceRow::depth);
    (0..depth)
        .map(|i| Series::new(format!("{name}_{}", i + 1), rows.iter().map(|r| (r.step as f64, pick(r)[i])).collect()))
        .collect()
}

/// `(file name, svg)` for each trace plot.
pub fn trace_plots(rows: &[TraceRow]) -> Vec<(&'static str, String)> {
    let eq = vec![Series::new("eq_error", rows.iter().map(|r| (r.step as f64, r.eq_error_exact)).collect())];
    vec![
        ("gamma.svg", line_chart("homotopy parameters", "step", "gamma", &per_layer(rows, "gamma", |r| &r.gammas))),
        ("lambda.svg", line_chart("dual variables", "step", "lambda", &per_layer(rows, "lambda", |r| &r.lambdas))),
        ("u.svg", line_chart("slacks", "step", "u", &per_layer(rows, "u", |r| &r.us))),
        ("eq_error.svg", line_chart("equivariance error", "step", "max error", &eq)),
    ]
}

/// Parses trace.csv text and writes the four plots into `out_dir`.
pub fn write_trace_plots(trace_csv: &str, out_dir: &Path) -> Result<()> {
    let rows = read_csv(trace_csv).context("parsing trace")?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, svg) in trace_plots(&rows) {
        let path = out_dir.join(name);
        std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
