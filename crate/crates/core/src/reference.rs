//! Classical state-space oracle: Adams-Bashforth two-step integration of the
//! network ODEs, used to cross-validate the splitting solver.
//!
//! The state is every membrane voltage plus one filtered gate voltage per
//! distinct `(gate_source, tau)` pair with `tau > 0`. Integration starts from
//! rest, bootstraps the first step with forward Euler, and then applies
//! `x_{n+1} = x_n + dt * (3/2 f_n - 1/2 f_{n-1})`. The trajectory is sampled
//! onto the output grid by nearest internal step; external currents are read
//! from their grid sample-and-hold.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{Network, NeuronId, VoltageEnsemble};
use crate::signal::{Signal, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Internal step, independent of (and at most) the output grid spacing.
    pub dt_ms: f64,
    pub downsample_to: TimeGrid,
}

impl IntegratorConfig {
    pub fn new(dt_ms: f64, downsample_to: TimeGrid) -> Result<Self> {
        if !(dt_ms > 0.0) || !dt_ms.is_finite() || dt_ms > downsample_to.dt_ms() {
            return Err(Error::InvalidIntegratorStep {
                dt_ms,
                grid_dt_ms: downsample_to.dt_ms(),
            });
        }
        Ok(Self {
            dt_ms,
            downsample_to,
        })
    }
}

/// Filter states are ordered by first appearance in the branch list.
fn filter_slots(net: &Network) -> (Vec<(NeuronId, f64)>, HashMap<(NeuronId, u64), usize>) {
    let mut slots = Vec::new();
    let mut index = HashMap::new();
    for branch in net.branches() {
        let tau = branch.element.tau_gate_ms;
        if tau > 0.0 {
            let key = (branch.gate_source, tau.to_bits());
            index.entry(key).or_insert_with(|| {
                slots.push((branch.gate_source, tau));
                slots.len() - 1
            });
        }
    }
    (slots, index)
}

struct Derivatives {
    dv: Vec<f64>,
    dx: Vec<f64>,
}

fn eval_rhs(
    net: &Network,
    slots: &[(NeuronId, f64)],
    slot_of: &HashMap<(NeuronId, u64), usize>,
    t_ms: f64,
    v: &[f64],
    x: &[f64],
    out: &mut Derivatives,
) {
    let grid = net.grid();
    let sample = ((t_ms / grid.dt_ms()) as usize).min(grid.n_samples() - 1);
    for (i, neuron) in net.neurons().iter().enumerate() {
        out.dv[i] = neuron.i_ext.values()[sample] - neuron.leak_conductance * v[i];
    }
    for branch in net.branches() {
        if branch.enable_after_ms > 0.0 && t_ms < branch.enable_after_ms {
            continue;
        }
        let tau = branch.element.tau_gate_ms;
        let gate = if tau > 0.0 {
            x[slot_of[&(branch.gate_source, tau.to_bits())]]
        } else {
            v[branch.gate_source]
        };
        let g = branch.element.g_max * (gate - branch.element.v_threshold_mv).max(0.0);
        out.dv[branch.target] -= g * (v[branch.target] - branch.nernst_mv);
    }
    for (i, neuron) in net.neurons().iter().enumerate() {
        out.dv[i] /= neuron.capacitance;
    }
    for (slot, &(source, tau)) in slots.iter().enumerate() {
        out.dx[slot] = (v[source] - x[slot]) / tau;
    }
}

/// Integrates the network from rest over one period of the output grid.
pub fn integrate_ab2(net: &Network, cfg: &IntegratorConfig) -> Result<VoltageEnsemble> {
    IntegratorConfig::new(cfg.dt_ms, cfg.downsample_to)?;
    let grid = cfg.downsample_to;
    let n_neurons = net.n_neurons();
    let (slots, slot_of) = filter_slots(net);
    let n_steps = (grid.duration_ms() / cfg.dt_ms).round() as usize;
    let dt = cfg.dt_ms;

    let mut v = vec![0.0; n_neurons];
    let mut x = vec![0.0; slots.len()];
    let mut trajectory: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
    trajectory.push(v.clone());

    let mut f_prev = Derivatives {
        dv: vec![0.0; n_neurons],
        dx: vec![0.0; slots.len()],
    };
    let mut f_cur = Derivatives {
        dv: vec![0.0; n_neurons],
        dx: vec![0.0; slots.len()],
    };

    // Forward-Euler bootstrap.
    eval_rhs(net, &slots, &slot_of, 0.0, &v, &x, &mut f_prev);
    for i in 0..n_neurons {
        v[i] += dt * f_prev.dv[i];
    }
    for s in 0..slots.len() {
        x[s] += dt * f_prev.dx[s];
    }
    trajectory.push(v.clone());

    for step in 1..n_steps {
        let t = step as f64 * dt;
        eval_rhs(net, &slots, &slot_of, t, &v, &x, &mut f_cur);
        for i in 0..n_neurons {
            v[i] += dt * (1.5 * f_cur.dv[i] - 0.5 * f_prev.dv[i]);
        }
        for s in 0..slots.len() {
            x[s] += dt * (1.5 * f_cur.dx[s] - 0.5 * f_prev.dx[s]);
        }
        if v.iter().any(|y| !y.is_finite()) || x.iter().any(|y| !y.is_finite()) {
            return Err(Error::IntegrationDiverged { t_ms: t + dt });
        }
        trajectory.push(v.clone());
        std::mem::swap(&mut f_prev, &mut f_cur);
    }

    // Nearest-sample downsampling.
    let mut signals = Vec::with_capacity(n_neurons);
    for i in 0..n_neurons {
        let values: Vec<f64> = (0..grid.n_samples())
            .map(|k| {
                let idx = ((grid.time_at(k) / dt).round() as usize).min(n_steps);
                trajectory[idx][i]
            })
            .collect();
        signals.push(Signal::new(grid, values)?);
    }
    VoltageEnsemble::new(signals)
}
