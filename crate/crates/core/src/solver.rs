//! Variable-metric forward-backward splitting over a whole network.
//!
//! Each iteration takes a forward step through the metric-scaled monotone
//! part plus the re-evaluated offset,
//! `z = v - alpha * G_tot(v) .* v + alpha * (N_tot(v) + i_ext)`,
//! then a backward step through the resolvent of the derivative operator,
//! `v' = (I + alpha*c*D)^-1 z`, per neuron. The inverse variable metric is
//! the total conductance signal itself; no separate metric machinery exists.
//!
//! Stopping rule: relative iterate change
//! `||v_k+1 - v_k|| / max(||v_k||, 1e-12) <= tolerance`. The reported
//! per-neuron residual norms certify the result independently: for a frozen
//! conductance the residual scales like `(1 + alpha*G)/alpha` times the
//! iterate change, so tightening the tolerance tightens the certificate.

use crate::error::{Error, Result};
use crate::lti::{resolvent_d, ResolventBackend};
use crate::model::{network_residual, total_conductance_and_drive, Network, VoltageEnsemble};
use crate::signal::{l2_norm, Signal};

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// All-zero voltages (the resting state).
    Rest,
    Provided(VoltageEnsemble),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Step size of the splitting iteration.
    pub alpha: f64,
    pub max_iterations: usize,
    /// Relative iterate-change stopping threshold.
    pub tolerance: f64,
    pub backend: ResolventBackend,
    pub initial_guess: InitialGuess,
    /// Iterates whose max |v| exceeds this abort with a divergence error.
    pub divergence_guard: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.28,
            max_iterations: 5000,
            tolerance: 1e-6,
            backend: ResolventBackend::spectral(),
            initial_guess: InitialGuess::Rest,
            divergence_guard: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidSolverConfig {
                reason: "alpha must be positive",
            });
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::InvalidSolverConfig {
                reason: "tolerance must be positive",
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidSolverConfig {
                reason: "max_iterations must be at least 1",
            });
        }
        if !(self.divergence_guard > 0.0) {
            return Err(Error::InvalidSolverConfig {
                reason: "divergence_guard must be positive",
            });
        }
        self.backend.validate()
    }
}

/// Solver output: the voltage solution plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub voltages: VoltageEnsemble,
    pub iterations_used: usize,
    pub converged: bool,
    pub iterate_change_history: Vec<f64>,
    pub final_residual_norm: Vec<f64>,
    /// Non-fatal issues, e.g. inputs that violate the rest-boundary
    /// convention.
    pub warnings: Vec<String>,
}

/// Per-iteration diagnostics for progress callbacks.
#[derive(Debug, Clone, Copy)]
pub struct ProgressEvent {
    pub iteration: usize,
    pub iterate_change: f64,
    /// Total residual norm; only computed on the final event.
    pub residual_norm: Option<f64>,
}

/// One forward-backward step over every neuron.
pub fn vmfbs_step(
    net: &Network,
    voltages: &VoltageEnsemble,
    cfg: &SolverConfig,
) -> Result<VoltageEnsemble> {
    cfg.validate()?;
    let (conductance, drive) = total_conductance_and_drive(net, voltages, &cfg.backend)?;
    let grid = net.grid();
    let n = grid.n_samples();
    let mut next = Vec::with_capacity(net.n_neurons());
    for (i, neuron) in net.neurons().iter().enumerate() {
        let v = voltages.signal(i).values();
        let i_ext = neuron.i_ext.values();
        let mut z = vec![0.0; n];
        for k in 0..n {
            z[k] = v[k] - cfg.alpha * conductance[i][k] * v[k]
                + cfg.alpha * (drive[i][k] + i_ext[k]);
        }
        if let Some((index, &value)) = z.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            let _ = (index, value);
            return Err(Error::Divergence {
                iteration: 0,
                max_abs: f64::INFINITY,
            });
        }
        let z = Signal::from_raw(grid, z);
        next.push(resolvent_d(&z, cfg.alpha * neuron.capacitance, &cfg.backend)?);
    }
    VoltageEnsemble::new(next)
}

fn ensemble_norm(v: &VoltageEnsemble) -> f64 {
    v.signals()
        .iter()
        .map(|s| l2_norm(s).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn ensemble_diff_norm(a: &VoltageEnsemble, b: &VoltageEnsemble) -> f64 {
    let dt = a.grid().dt_ms();
    let mut acc = 0.0;
    for (sa, sb) in a.signals().iter().zip(b.signals()) {
        acc += sa
            .values()
            .iter()
            .zip(sb.values())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    (acc * dt).sqrt()
}

const REST_BOUNDARY_TOLERANCE: f64 = 1e-12;

fn rest_boundary_warnings(net: &Network) -> Vec<String> {
    let mut warnings = Vec::new();
    let n = net.grid().n_samples();
    for (i, neuron) in net.neurons().iter().enumerate() {
        let v = neuron.i_ext.values();
        if v[0].abs() > REST_BOUNDARY_TOLERANCE || v[n - 1].abs() > REST_BOUNDARY_TOLERANCE {
            warnings.push(format!(
                "neuron {i}: i_ext is nonzero at the period boundary \
                 (start {:.3e}, end {:.3e}); the rest-boundary convention is violated",
                v[0],
                v[n - 1]
            ));
        }
    }
    warnings
}

/// Iterates [`vmfbs_step`] from the initial guess until the relative iterate
/// change drops below the tolerance or `max_iterations` is reached.
pub fn solve(net: &Network, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_with_progress(net, cfg, |_| {})
}

/// [`solve`] with a per-iteration diagnostics callback.
pub fn solve_with_progress(
    net: &Network,
    cfg: &SolverConfig,
    mut progress: impl FnMut(&ProgressEvent),
) -> Result<SolveResult> {
    cfg.validate()?;
    let warnings = rest_boundary_warnings(net);
    let mut v = match &cfg.initial_guess {
        InitialGuess::Rest => VoltageEnsemble::rest(net.grid(), net.n_neurons()),
        InitialGuess::Provided(ensemble) => {
            if ensemble.len() != net.n_neurons() || ensemble.grid() != net.grid() {
                return Err(Error::EnsembleSizeMismatch {
                    expected: net.n_neurons(),
                    got: ensemble.len(),
                });
            }
            ensemble.clone()
        }
    };

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations_used = 0;
    for iteration in 1..=cfg.max_iterations {
        iterations_used = iteration;
        let next = vmfbs_step(net, &v, cfg).map_err(|e| match e {
            Error::Divergence { max_abs, .. } => Error::Divergence { iteration, max_abs },
            other => other,
        })?;
        let change = ensemble_diff_norm(&next, &v) / ensemble_norm(&v).max(1e-12);
        history.push(change);
        let max_abs = next.max_abs();
        if max_abs > cfg.divergence_guard {
            return Err(Error::Divergence { iteration, max_abs });
        }
        v = next;
        progress(&ProgressEvent {
            iteration,
            iterate_change: change,
            residual_norm: None,
        });
        if change <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    let final_residual_norm: Vec<f64> = network_residual(net, &v, &cfg.backend)?
        .iter()
        .map(l2_norm)
        .collect();
    let total_residual = final_residual_norm
        .iter()
        .map(|r| r * r)
        .sum::<f64>()
        .sqrt();
    progress(&ProgressEvent {
        iteration: iterations_used,
        iterate_change: *history.last().unwrap_or(&0.0),
        residual_norm: Some(total_residual),
    });

    Ok(SolveResult {
        voltages: v,
        iterations_used,
        converged,
        iterate_change_history: history,
        final_residual_norm,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConductanceElement, NetworkBuilder};
    use crate::signal::{from_spectrum, inner_product, square_wave, to_spectrum, Spectrum, TimeGrid};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn leak_only(grid: TimeGrid, c: f64, g0: f64, i_ext: Signal) -> Network {
        let mut b = NetworkBuilder::new(grid);
        b.add_neuron(c, g0, Some(i_ext));
        b.build().unwrap()
    }

    /// Discrete frequency-domain solution of c*Dv + g0*v = i (the same
    /// derivative symbol as the residual, Nyquist zeroed).
    fn lti_solution(grid: TimeGrid, c: f64, g0: f64, i_ext: &Signal) -> Signal {
        let sp = to_spectrum(i_ext);
        let n = grid.n_samples();
        let coeffs: Vec<Complex64> = sp
            .coefficients()
            .iter()
            .enumerate()
            .map(|(k, &ck)| {
                let w = if k == n / 2 { 0.0 } else { grid.angular_frequency(k) };
                ck / Complex64::new(g0, c * w)
            })
            .collect();
        from_spectrum(&Spectrum::new(grid, coeffs).unwrap()).unwrap()
    }

    #[test]
    fn zero_input_converges_in_one_iteration() {
        let grid = TimeGrid::new(128, 20.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, Signal::zeros(grid));
        let result = solve(&net, &SolverConfig::default()).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations_used, 1);
        assert_eq!(result.voltages.max_abs(), 0.0);
        assert!(result.warnings.is_empty());
    }

    #[test]
    fn step_size_zero_limit_returns_iterate() {
        let grid = TimeGrid::new(128, 20.0).unwrap();
        let i_ext = square_wave(grid, 1.0, 2.0, 10.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, i_ext.clone());
        let v = VoltageEnsemble::new(vec![lti_solution(grid, 1.0, 1.0, &i_ext)]).unwrap();
        let alpha = 1e-9;
        let cfg = SolverConfig {
            alpha,
            ..SolverConfig::default()
        };
        let stepped = vmfbs_step(&net, &v, &cfg).unwrap();
        // ||J_a(v + a*w) - v|| = O(alpha * scale)
        let diff = ensemble_diff_norm(&stepped, &v);
        assert!(diff <= alpha * 1e3, "diff {diff}");
    }

    #[test]
    fn exact_solution_is_a_fixed_point() {
        let grid = TimeGrid::new(256, 40.0).unwrap();
        let i_ext = square_wave(grid, 0.5, 2.0, 30.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, i_ext.clone());
        let v_star = VoltageEnsemble::new(vec![lti_solution(grid, 1.0, 1.0, &i_ext)]).unwrap();
        let cfg = SolverConfig::default();
        let stepped = vmfbs_step(&net, &v_star, &cfg).unwrap();
        let drift = ensemble_diff_norm(&stepped, &v_star) / ensemble_norm(&v_star);
        assert!(drift <= 1e-9, "fixed-point drift {drift}");
    }

    #[test]
    fn single_step_from_rest_is_filtered_offset() {
        // From rest every gate is closed, so z = alpha * i_ext and the step
        // reduces to the resolvent of that scaled input.
        let grid = TimeGrid::new(128, 20.0).unwrap();
        let i_ext = Signal::constant(grid, 0.3).unwrap();
        let net = leak_only(grid, 1.0, 1.0, i_ext.clone());
        let cfg = SolverConfig::default();
        let rest = VoltageEnsemble::rest(grid, 1);
        let stepped = vmfbs_step(&net, &rest, &cfg).unwrap();
        let z = Signal::constant(grid, cfg.alpha * 0.3).unwrap();
        let expected = crate::lti::resolvent_d(&z, cfg.alpha, &cfg.backend).unwrap();
        for k in 0..grid.n_samples() {
            assert_relative_eq!(
                stepped.signal(0).values()[k],
                expected.values()[k],
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn linear_neuron_converges_to_lti_response() {
        let grid = TimeGrid::new(512, 40.0).unwrap();
        let i_ext = square_wave(grid, 0.5, 2.0, 30.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, i_ext.clone());
        let cfg = SolverConfig {
            tolerance: 1e-8,
            ..SolverConfig::default()
        };
        let result = solve(&net, &cfg).unwrap();
        assert!(result.converged);
        let expected = lti_solution(grid, 1.0, 1.0, &i_ext);
        let err = Signal::new(
            grid,
            result
                .voltages
                .signal(0)
                .values()
                .iter()
                .zip(expected.values())
                .map(|(a, b)| a - b)
                .collect(),
        )
        .unwrap();
        let rel = l2_norm(&err) / l2_norm(&expected);
        assert!(rel <= 1e-4, "relative error {rel}");
        // Residual certificate comes along for free.
        assert!(result.final_residual_norm[0] < 1e-4);
    }

    #[test]
    fn diverges_with_huge_step_size() {
        let grid = TimeGrid::new(256, 40.0).unwrap();
        let i_ext = square_wave(grid, 0.5, 2.0, 30.0).unwrap();
        let mut b = NetworkBuilder::new(grid);
        let n0 = b.add_neuron(1.0, 0.1, Some(i_ext));
        b.add_internal_branch(n0, ConductanceElement::new(1.0, 1.0, 0.0).unwrap(), 10.0);
        b.add_internal_branch(n0, ConductanceElement::new(10.0, 1.0, 10.0).unwrap(), -10.0);
        let net = b.build().unwrap();
        let cfg = SolverConfig {
            alpha: 50.0,
            ..SolverConfig::default()
        };
        match solve(&net, &cfg) {
            Err(Error::Divergence { iteration, .. }) => assert!(iteration >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn non_rest_boundary_is_warned() {
        let grid = TimeGrid::new(128, 20.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, Signal::constant(grid, 0.2).unwrap());
        let result = solve(&net, &SolverConfig::default()).unwrap();
        assert_eq!(result.warnings.len(), 1);
        assert!(result.warnings[0].contains("rest-boundary"));
    }

    #[test]
    fn solve_is_deterministic() {
        let grid = TimeGrid::new(256, 40.0).unwrap();
        let i_ext = square_wave(grid, 0.5, 2.0, 30.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, i_ext);
        let cfg = SolverConfig::default();
        let a = solve(&net, &cfg).unwrap();
        let b = solve(&net, &cfg).unwrap();
        assert_eq!(a.voltages, b.voltages);
        assert_eq!(a.iterate_change_history, b.iterate_change_history);
    }

    #[test]
    fn progress_callback_sees_every_iteration() {
        let grid = TimeGrid::new(128, 20.0).unwrap();
        let i_ext = square_wave(grid, 0.5, 2.0, 10.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, i_ext);
        let mut events = Vec::new();
        let result = solve_with_progress(&net, &SolverConfig::default(), |e| {
            events.push((e.iteration, e.residual_norm.is_some()));
        })
        .unwrap();
        // one event per iteration plus the final residual event
        assert_eq!(events.len(), result.iterations_used + 1);
        assert!(events.last().unwrap().1);
        assert!(events[..events.len() - 1].iter().all(|(_, has_res)| !has_res));
    }

    #[test]
    fn rejects_invalid_config() {
        let grid = TimeGrid::new(128, 20.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, Signal::zeros(grid));
        for cfg in [
            SolverConfig {
                alpha: 0.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                tolerance: -1.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                max_iterations: 0,
                ..SolverConfig::default()
            },
        ] {
            assert!(matches!(
                solve(&net, &cfg),
                Err(Error::InvalidSolverConfig { .. })
            ));
        }
    }

    #[test]
    fn residual_certificate_tightens_with_tolerance() {
        let grid = TimeGrid::new(512, 40.0).unwrap();
        let i_ext = square_wave(grid, 0.5, 2.0, 30.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, i_ext);
        let mut last = f64::INFINITY;
        for tol in [1e-4, 1e-6, 1e-8] {
            let cfg = SolverConfig {
                tolerance: tol,
                ..SolverConfig::default()
            };
            let result = solve(&net, &cfg).unwrap();
            assert!(result.converged);
            let res = result.final_residual_norm[0];
            assert!(res < last, "residual {res} not below {last} at tol {tol}");
            last = res;
        }
    }

    #[test]
    fn fixed_point_certificate_on_converged_output() {
        let grid = TimeGrid::new(512, 40.0).unwrap();
        let i_ext = square_wave(grid, 0.5, 2.0, 30.0).unwrap();
        let net = leak_only(grid, 1.0, 1.0, i_ext);
        let cfg = SolverConfig {
            tolerance: 1e-8,
            ..SolverConfig::default()
        };
        let result = solve(&net, &cfg).unwrap();
        assert!(result.converged);
        let stepped = vmfbs_step(&net, &result.voltages, &cfg).unwrap();
        let drift = ensemble_diff_norm(&stepped, &result.voltages);
        assert!(drift <= 10.0 * cfg.tolerance * ensemble_norm(&result.voltages));
    }
}
