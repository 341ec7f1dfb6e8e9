//! CSV and summary writers. Floats are printed with 17 significant digits
//! (`{:.16e}`) so re-parsing reproduces the in-memory values bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use memsplit_core::{RasterRow, SolveResult, VoltageEnsemble};

use crate::CliError;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Run(format!("cannot write {}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t_ms, v_0 .. v_{N-1}` rows over one period.
pub fn voltages_csv(voltages: &VoltageEnsemble) -> String {
    let grid = voltages.grid();
    let mut out = String::from("t_ms");
    for i in 0..voltages.len() {
        let _ = write!(out, ",v_{i}");
    }
    out.push('\n');
    for k in 0..grid.n_samples() {
        let _ = write!(out, "{}", fmt_f64(grid.time_at(k)));
        for s in voltages.signals() {
            let _ = write!(out, ",{}", fmt_f64(s.values()[k]));
        }
        out.push('\n');
    }
    out
}

/// Side-by-side per-neuron traces from two solutions on one grid.
pub fn compare_voltages_csv(
    vmfbs: &VoltageEnsemble,
    ab2: &VoltageEnsemble,
) -> String {
    let grid = vmfbs.grid();
    let mut out = String::from("t_ms");
    for i in 0..vmfbs.len() {
        let _ = write!(out, ",v_{i}_vmfbs,v_{i}_ab2");
    }
    out.push('\n');
    for k in 0..grid.n_samples() {
        let _ = write!(out, "{}", fmt_f64(grid.time_at(k)));
        for i in 0..vmfbs.len() {
            let _ = write!(
                out,
                ",{},{}",
                fmt_f64(vmfbs.signal(i).values()[k]),
                fmt_f64(ab2.signal(i).values()[k])
            );
        }
        out.push('\n');
    }
    out
}

pub fn spikes_csv(rows: &[RasterRow]) -> String {
    let mut out = String::from("neuron_id,t_ms,label\n");
    for row in rows {
        let _ = writeln!(out, "{},{},{}", row.neuron_id, fmt_f64(row.t_ms), row.label);
    }
    out
}

pub fn solve_log_csv(result: &SolveResult) -> String {
    let mut out = String::from("iter,change\n");
    for (i, change) in result.iterate_change_history.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, fmt_f64(*change));
    }
    out
}

pub fn run_summary(
    scenario: &str,
    result: &SolveResult,
    wall_ms: f64,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {scenario}");
    let _ = writeln!(out, "neurons: {}", result.voltages.len());
    let _ = writeln!(out, "samples: {}", result.voltages.grid().n_samples());
    let _ = writeln!(out, "duration_ms: {}", result.voltages.grid().duration_ms());
    let _ = writeln!(out, "converged: {}", result.converged);
    let _ = writeln!(out, "iterations: {}", result.iterations_used);
    let _ = writeln!(
        out,
        "final_iterate_change: {}",
        result
            .iterate_change_history
            .last()
            .map(|v| fmt_f64(*v))
            .unwrap_or_else(|| "nan".into())
    );
    for (i, r) in result.final_residual_norm.iter().enumerate() {
        let _ = writeln!(out, "residual_norm[{i}]: {}", fmt_f64(*r));
    }
    for w in &result.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(out, "wall_time_ms: {wall_ms:.1}");
    out
}

/// Parses a `voltages.csv` back into per-neuron columns (used by tests to
/// verify the bit-exact round trip).
pub fn parse_voltages_csv(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Run("empty voltages csv".into()))?;
    let n_cols = header.split(',').count();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_cols];
    for line in lines {
        for (c, field) in line.split(',').enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|e| CliError::Run(format!("bad float '{field}': {e}")))?;
            columns[c].push(v);
        }
    }
    Ok(columns)
}
