//! The `simulate`, `compare` and `validate` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use memsplit_core::{
    compare_trains, detect_spikes, integrate_ab2, raster_dataset, solve_with_progress, Error,
    IntegratorConfig, MatchReport, SolveResult, SpikeTrain, VoltageEnsemble,
};

use crate::config::ScenarioConfig;
use crate::output;
use crate::svg;
use crate::CliError;

/// Flag overrides applied on top of the scenario file.
#[derive(Debug, Default, Clone)]
pub struct SimulateOptions {
    pub backend: Option<String>,
    pub alpha: Option<f64>,
    pub tolerance: Option<f64>,
    pub trace: bool,
    pub raster: bool,
    pub quiet: bool,
}

fn apply_overrides(cfg: &mut ScenarioConfig, opts: &SimulateOptions) -> Result<(), CliError> {
    if let Some(backend) = &opts.backend {
        cfg.solver.backend = backend.clone();
    }
    if let Some(alpha) = opts.alpha {
        cfg.solver.alpha = alpha;
    }
    if let Some(tol) = opts.tolerance {
        cfg.solver.tolerance = tol;
    }
    cfg.validate()
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))
}

fn scenario_name(config_path: &Path) -> String {
    config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string())
}

fn detect_all(
    cfg: &ScenarioConfig,
    voltages: &VoltageEnsemble,
) -> Result<Vec<SpikeTrain>, CliError> {
    let det = cfg.detection_config();
    (0..voltages.len())
        .map(|i| {
            detect_spikes(voltages.signal(i), i, &det)
                .map_err(|e| CliError::Run(e.to_string()))
        })
        .collect()
}

fn run_solver(
    cfg: &ScenarioConfig,
    quiet: bool,
) -> Result<(SolveResult, f64), CliError> {
    let net = cfg.build_network()?;
    let solver_cfg = cfg.solver_config();
    let started = Instant::now();
    let result = solve_with_progress(&net, &solver_cfg, |event| {
        if !quiet && event.iteration % 500 == 0 && event.residual_norm.is_none() {
            eprintln!(
                "iter {:>6}  change {:.3e}",
                event.iteration, event.iterate_change
            );
        }
    })
    .map_err(|e| match e {
        Error::Divergence { iteration, max_abs } => CliError::Run(format!(
            "vmfbs diverged at iteration {iteration} (max |v| = {max_abs:.3e})"
        )),
        other => CliError::Run(other.to_string()),
    })?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok((result, wall_ms))
}

/// Solves a scenario and writes voltages, spikes, the solve log, a summary
/// and optional SVG plots into `out_dir`.
pub fn simulate(
    config_path: &Path,
    out_dir: &Path,
    opts: &SimulateOptions,
) -> Result<(), CliError> {
    let mut cfg = crate::config::load_config(config_path)?;
    apply_overrides(&mut cfg, opts)?;
    ensure_dir(out_dir)?;

    let (result, wall_ms) = run_solver(&cfg, opts.quiet)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let trains = detect_all(&cfg, &result.voltages)?;
    let rows = raster_dataset(&trains, &cfg.labels()).map_err(|e| CliError::Run(e.to_string()))?;

    output::write_text(
        &out_dir.join("voltages.csv"),
        &output::voltages_csv(&result.voltages),
    )?;
    output::write_text(&out_dir.join("spikes.csv"), &output::spikes_csv(&rows))?;
    output::write_text(
        &out_dir.join("solve_log.csv"),
        &output::solve_log_csv(&result),
    )?;
    output::write_text(
        &out_dir.join("run_summary"),
        &output::run_summary(&scenario_name(config_path), &result, wall_ms),
    )?;
    if opts.trace {
        output::write_text(&out_dir.join("trace.svg"), &svg::trace_svg(&result.voltages))?;
    }
    if opts.raster {
        let mut markers: Vec<f64> = cfg
            .synapses
            .iter()
            .map(|s| s.enable_after_ms)
            .filter(|&t| t > 0.0)
            .collect();
        markers.sort_by(f64::total_cmp);
        markers.dedup();
        output::write_text(
            &out_dir.join("raster.svg"),
            &svg::raster_svg(
                &rows,
                cfg.neurons.len(),
                cfg.grid.duration_ms,
                &markers,
            ),
        )?;
    }
    if !result.converged {
        return Err(CliError::Run(format!(
            "solver did not converge within {} iterations (last change {:.3e})",
            result.iterations_used,
            result.iterate_change_history.last().copied().unwrap_or(f64::NAN)
        )));
    }
    if !opts.quiet {
        eprintln!(
            "converged in {} iterations ({wall_ms:.0} ms)",
            result.iterations_used
        );
    }
    Ok(())
}

/// Per-neuron outcome of a compare run.
#[derive(Debug, Clone)]
pub struct NeuronComparison {
    pub neuron_id: usize,
    pub report: Option<MatchReport>,
    pub vmfbs_count: usize,
    pub ab2_count: usize,
    pub pass: bool,
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub comparisons: Vec<NeuronComparison>,
    /// Set when the splitting solver failed; the reference run still proceeds.
    pub solver_failure: Option<String>,
    pub all_passed: bool,
}

/// Runs both the splitting solver and the reference integrator, emits
/// side-by-side traces plus a per-neuron match report, and prints one
/// PASS/FAIL line per neuron.
pub fn compare(
    config_path: &Path,
    out_dir: &Path,
    tol_ms_override: Option<f64>,
) -> Result<CompareOutcome, CliError> {
    let cfg = crate::config::load_config(config_path)?;
    ensure_dir(out_dir)?;
    let tol_ms = tol_ms_override.unwrap_or(cfg.compare.tol_ms);
    if !(tol_ms > 0.0) {
        return Err(CliError::Usage(format!(
            "--tol-ms must be positive, got {tol_ms}"
        )));
    }

    let net = cfg.build_network()?;
    let grid = cfg.time_grid()?;
    let integrator = IntegratorConfig::new(cfg.compare.ab2_dt_ms, grid)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let ab2 = integrate_ab2(&net, &integrator).map_err(|e| CliError::Run(e.to_string()))?;
    let ab2_trains = detect_all(&cfg, &ab2)?;

    let solver_outcome = run_solver(&cfg, true);
    let (solver_failure, vmfbs, solve_result) = match solver_outcome {
        Ok((result, _)) if result.converged => (None, Some(result.voltages.clone()), Some(result)),
        Ok((result, _)) => (
            Some(format!(
                "solver did not converge within {} iterations",
                result.iterations_used
            )),
            Some(result.voltages.clone()),
            Some(result),
        ),
        Err(CliError::Run(msg)) => (Some(msg), None, None),
        Err(other) => return Err(other),
    };

    let mut comparisons = Vec::new();
    let mut report_csv = String::from(
        "neuron_id,vmfbs_spikes,ab2_spikes,matched,unmatched_vmfbs,unmatched_ab2,max_offset_ms,pass\n",
    );
    if let Some(vmfbs) = &vmfbs {
        let vmfbs_trains = detect_all(&cfg, vmfbs)?;
        output::write_text(
            &out_dir.join("compare_voltages.csv"),
            &output::compare_voltages_csv(vmfbs, &ab2),
        )?;
        for (a, b) in vmfbs_trains.iter().zip(&ab2_trains) {
            let report = compare_trains(a, b, tol_ms).map_err(|e| CliError::Run(e.to_string()))?;
            let pass = solver_failure.is_none() && report.all_matched();
            report_csv.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{}\n",
                a.neuron_id,
                a.len(),
                b.len(),
                report.matched.len(),
                report.unmatched_a,
                report.unmatched_b,
                report.max_offset_ms,
                pass
            ));
            println!(
                "neuron {:>3}: {} ({} vmfbs / {} ab2 spikes, {} matched, max offset {:.3} ms)",
                a.neuron_id,
                if pass { "PASS" } else { "FAIL" },
                a.len(),
                b.len(),
                report.matched.len(),
                report.max_offset_ms
            );
            comparisons.push(NeuronComparison {
                neuron_id: a.neuron_id,
                report: Some(report),
                vmfbs_count: a.len(),
                ab2_count: b.len(),
                pass,
            });
        }
    } else {
        for train in &ab2_trains {
            report_csv.push_str(&format!(
                "{},,{},,,,,false\n",
                train.neuron_id,
                train.len()
            ));
            println!(
                "neuron {:>3}: FAIL (vmfbs unavailable, {} ab2 spikes)",
                train.neuron_id,
                train.len()
            );
            comparisons.push(NeuronComparison {
                neuron_id: train.neuron_id,
                report: None,
                vmfbs_count: 0,
                ab2_count: train.len(),
                pass: false,
            });
        }
    }
    output::write_text(&out_dir.join("compare_report.csv"), &report_csv)?;
    if let Some(result) = &solve_result {
        output::write_text(
            &out_dir.join("solve_log.csv"),
            &output::solve_log_csv(result),
        )?;
    }
    if let Some(failure) = &solver_failure {
        eprintln!("vmfbs failure: {failure} (reference integrator still completed)");
    }

    let all_passed = solver_failure.is_none() && comparisons.iter().all(|c| c.pass);
    Ok(CompareOutcome {
        comparisons,
        solver_failure,
        all_passed,
    })
}

/// Loads and validates a scenario, printing a short description.
pub fn validate(config_path: &Path) -> Result<(), CliError> {
    let cfg = crate::config::load_config(config_path)?;
    println!(
        "{}: ok ({} neurons, {} synapses, {} samples over {} ms, backend {})",
        config_path.display(),
        cfg.neurons.len(),
        cfg.synapses.len(),
        cfg.grid.n_samples,
        cfg.grid.duration_ms,
        cfg.solver.backend
    );
    Ok(())
}

/// Convenience used by tests: output path inside a directory.
pub fn out_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
