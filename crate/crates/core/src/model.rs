//! Network data model: neurons, gated conductance branches (internal ionic
//! currents and synapses share one representation), and evaluation of the
//! total conductance, total reversal drive and the circuit residual.
//!
//! A branch contributes the current `g(t) * (v_target - nernst)` where the
//! conductance `g(t) = g_max * max(0, v_x(t) - v_threshold)` is gated by the
//! low-pass filtered voltage `v_x` of its gate-source neuron (`tau = 0` reads
//! the voltage directly). Synapses differ from internal branches only in
//! gating on another neuron's voltage.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lti::{derivative, lowpass, ResolventBackend};
use crate::signal::{Signal, TimeGrid};

pub type NeuronId = usize;

/// A voltage-gated conductance: maximal conductance (mS), activation
/// threshold (mV) and gate filter timescale (ms, 0 = instantaneous).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductanceElement {
    pub g_max: f64,
    pub v_threshold_mv: f64,
    pub tau_gate_ms: f64,
}

impl ConductanceElement {
    pub fn new(g_max: f64, v_threshold_mv: f64, tau_gate_ms: f64) -> Result<Self> {
        if !(g_max >= 0.0) || !g_max.is_finite() {
            return Err(Error::InvalidParameter {
                name: "g_max",
                value: g_max,
            });
        }
        if !(tau_gate_ms >= 0.0) || !tau_gate_ms.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tau_gate_ms",
                value: tau_gate_ms,
            });
        }
        if !v_threshold_mv.is_finite() {
            return Err(Error::InvalidParameter {
                name: "v_threshold_mv",
                value: v_threshold_mv,
            });
        }
        Ok(Self {
            g_max,
            v_threshold_mv,
            tau_gate_ms,
        })
    }
}

/// One gated current branch into `target`, in series with a battery at
/// `nernst_mv`. Internal branches have `gate_source == target`; synapses gate
/// on the presynaptic neuron. `enable_after_ms > 0` hard-switches the branch
/// on at that time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub element: ConductanceElement,
    pub nernst_mv: f64,
    pub gate_source: NeuronId,
    pub target: NeuronId,
    pub enable_after_ms: f64,
}

/// Membrane capacitance, constant leak (reversal 0) and external current.
#[derive(Debug, Clone, PartialEq)]
pub struct Neuron {
    pub capacitance: f64,
    pub leak_conductance: f64,
    pub i_ext: Signal,
}

/// Immutable network of neurons and branches on one shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    grid: TimeGrid,
    neurons: Vec<Neuron>,
    branches: Vec<Branch>,
}

impl Network {
    pub fn new(neurons: Vec<Neuron>, branches: Vec<Branch>) -> Result<Self> {
        let grid = neurons
            .first()
            .map(|n| n.i_ext.grid())
            .ok_or(Error::EnsembleSizeMismatch {
                expected: 1,
                got: 0,
            })?;
        for neuron in &neurons {
            if !(neuron.capacitance > 0.0) || !neuron.capacitance.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "capacitance",
                    value: neuron.capacitance,
                });
            }
            if !(neuron.leak_conductance >= 0.0) || !neuron.leak_conductance.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "leak_conductance",
                    value: neuron.leak_conductance,
                });
            }
            if neuron.i_ext.grid() != grid {
                return Err(Error::IncompatibleSignals);
            }
        }
        let n = neurons.len();
        for branch in &branches {
            for id in [branch.gate_source, branch.target] {
                if id >= n {
                    return Err(Error::UnknownNeuron {
                        neuron_id: id,
                        n_neurons: n,
                    });
                }
            }
            if !(branch.enable_after_ms >= 0.0) || !branch.enable_after_ms.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "enable_after_ms",
                    value: branch.enable_after_ms,
                });
            }
            if !branch.nernst_mv.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "nernst_mv",
                    value: branch.nernst_mv,
                });
            }
        }
        Ok(Self {
            grid,
            neurons,
            branches,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_neurons(&self) -> usize {
        self.neurons.len()
    }

    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }
}

/// Incremental [`Network`] construction.
pub struct NetworkBuilder {
    grid: TimeGrid,
    neurons: Vec<Neuron>,
    branches: Vec<Branch>,
}

impl NetworkBuilder {
    pub fn new(grid: TimeGrid) -> Self {
        Self {
            grid,
            neurons: Vec::new(),
            branches: Vec::new(),
        }
    }

    /// Adds a neuron; `i_ext = None` means no external drive.
    pub fn add_neuron(
        &mut self,
        capacitance: f64,
        leak_conductance: f64,
        i_ext: Option<Signal>,
    ) -> NeuronId {
        let id = self.neurons.len();
        self.neurons.push(Neuron {
            capacitance,
            leak_conductance,
            i_ext: i_ext.unwrap_or_else(|| Signal::zeros(self.grid)),
        });
        id
    }

    pub fn add_internal_branch(
        &mut self,
        neuron: NeuronId,
        element: ConductanceElement,
        nernst_mv: f64,
    ) -> &mut Self {
        self.branches.push(Branch {
            element,
            nernst_mv,
            gate_source: neuron,
            target: neuron,
            enable_after_ms: 0.0,
        });
        self
    }

    pub fn add_synapse(
        &mut self,
        pre: NeuronId,
        post: NeuronId,
        element: ConductanceElement,
        nernst_mv: f64,
        enable_after_ms: f64,
    ) -> &mut Self {
        self.branches.push(Branch {
            element,
            nernst_mv,
            gate_source: pre,
            target: post,
            enable_after_ms,
        });
        self
    }

    pub fn build(self) -> Result<Network> {
        Network::new(self.neurons, self.branches)
    }
}

/// One membrane-voltage signal per neuron, all on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageEnsemble {
    signals: Vec<Signal>,
}

impl VoltageEnsemble {
    pub fn new(signals: Vec<Signal>) -> Result<Self> {
        let grid = signals
            .first()
            .map(Signal::grid)
            .ok_or(Error::EnsembleSizeMismatch {
                expected: 1,
                got: 0,
            })?;
        if signals.iter().any(|s| s.grid() != grid) {
            return Err(Error::IncompatibleSignals);
        }
        Ok(Self { signals })
    }

    /// All-zero ensemble (the resting state).
    pub fn rest(grid: TimeGrid, n_neurons: usize) -> Self {
        Self {
            signals: (0..n_neurons).map(|_| Signal::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.signals[0].grid()
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn signal(&self, neuron: NeuronId) -> &Signal {
        &self.signals[neuron]
    }

    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    pub fn max_abs(&self) -> f64 {
        self.signals.iter().fold(0.0, |m, s| m.max(s.max_abs()))
    }
}

fn check_ensemble(net: &Network, voltages: &VoltageEnsemble) -> Result<()> {
    if voltages.len() != net.n_neurons() {
        return Err(Error::EnsembleSizeMismatch {
            expected: net.n_neurons(),
            got: voltages.len(),
        });
    }
    if voltages.grid() != net.grid() {
        return Err(Error::IncompatibleSignals);
    }
    Ok(())
}

/// Per-step cache of filtered gate voltages, keyed by (source, tau bits).
struct GateFilterCache<'a> {
    voltages: &'a VoltageEnsemble,
    backend: &'a ResolventBackend,
    filtered: HashMap<(NeuronId, u64), Signal>,
}

impl<'a> GateFilterCache<'a> {
    fn new(voltages: &'a VoltageEnsemble, backend: &'a ResolventBackend) -> Self {
        Self {
            voltages,
            backend,
            filtered: HashMap::new(),
        }
    }

    fn gate_voltage(&mut self, source: NeuronId, tau_ms: f64) -> Result<&Signal> {
        if source >= self.voltages.len() {
            return Err(Error::UnknownNeuron {
                neuron_id: source,
                n_neurons: self.voltages.len(),
            });
        }
        if tau_ms == 0.0 {
            return Ok(self.voltages.signal(source));
        }
        let key = (source, tau_ms.to_bits());
        if !self.filtered.contains_key(&key) {
            let vx = lowpass(self.voltages.signal(source), tau_ms, self.backend)?;
            self.filtered.insert(key, vx);
        }
        Ok(&self.filtered[&key])
    }
}

fn gate_values(branch: &Branch, vx: &Signal) -> Vec<f64> {
    let grid = vx.grid();
    let g_max = branch.element.g_max;
    let thr = branch.element.v_threshold_mv;
    vx.values()
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if branch.enable_after_ms > 0.0 && grid.time_at(k) < branch.enable_after_ms {
                0.0
            } else {
                g_max * (v - thr).max(0.0)
            }
        })
        .collect()
}

/// Conductance waveform of one branch under the given voltages.
pub fn gate_conductance(
    branch: &Branch,
    voltages: &VoltageEnsemble,
    backend: &ResolventBackend,
) -> Result<Signal> {
    let mut cache = GateFilterCache::new(voltages, backend);
    let vx = cache.gate_voltage(branch.gate_source, branch.element.tau_gate_ms)?;
    Signal::new(voltages.grid(), gate_values(branch, vx))
}

/// Shared accumulation pass: per-neuron total conductance and total drive as
/// raw sample buffers. The solver calls this once per iteration.
pub(crate) fn total_conductance_and_drive(
    net: &Network,
    voltages: &VoltageEnsemble,
    backend: &ResolventBackend,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_ensemble(net, voltages)?;
    let n = net.grid().n_samples();
    let mut conductance: Vec<Vec<f64>> = net
        .neurons()
        .iter()
        .map(|nr| vec![nr.leak_conductance; n])
        .collect();
    let mut drive: Vec<Vec<f64>> = vec![vec![0.0; n]; net.n_neurons()];
    let mut cache = GateFilterCache::new(voltages, backend);
    for branch in net.branches() {
        // A zero-conductance branch contributes nothing; skipping keeps the
        // accumulators bit-identical.
        if branch.element.g_max == 0.0 {
            continue;
        }
        let vx = cache.gate_voltage(branch.gate_source, branch.element.tau_gate_ms)?;
        let g = gate_values(branch, vx);
        let gt = &mut conductance[branch.target];
        let nt = &mut drive[branch.target];
        for k in 0..n {
            gt[k] += g[k];
            nt[k] += g[k] * branch.nernst_mv;
        }
    }
    Ok((conductance, drive))
}

/// `G_tot` per neuron: leak plus every branch conductance targeting it.
pub fn total_conductance(
    net: &Network,
    voltages: &VoltageEnsemble,
    backend: &ResolventBackend,
) -> Result<Vec<Signal>> {
    let (conductance, _) = total_conductance_and_drive(net, voltages, backend)?;
    conductance
        .into_iter()
        .map(|v| Signal::new(net.grid(), v))
        .collect()
}

/// `N_tot` per neuron: branch conductances weighted by their reversal
/// potentials (the leak's reversal is 0 and contributes nothing).
pub fn total_drive(
    net: &Network,
    voltages: &VoltageEnsemble,
    backend: &ResolventBackend,
) -> Result<Vec<Signal>> {
    let (_, drive) = total_conductance_and_drive(net, voltages, backend)?;
    drive
        .into_iter()
        .map(|v| Signal::new(net.grid(), v))
        .collect()
}

/// Circuit residual per neuron:
/// `c * Dv + G_tot(v) .* v - (N_tot(v) + i_ext)`.
///
/// Vanishes exactly on solutions; the solver reports its norm as a
/// convergence certificate.
pub fn network_residual(
    net: &Network,
    voltages: &VoltageEnsemble,
    backend: &ResolventBackend,
) -> Result<Vec<Signal>> {
    let (conductance, drive) = total_conductance_and_drive(net, voltages, backend)?;
    let n = net.grid().n_samples();
    let mut out = Vec::with_capacity(net.n_neurons());
    for (i, neuron) in net.neurons().iter().enumerate() {
        let dv = derivative(voltages.signal(i));
        let v = voltages.signal(i).values();
        let mut r = vec![0.0; n];
        for k in 0..n {
            r[k] = neuron.capacitance * dv.values()[k] + conductance[i][k] * v[k]
                - drive[i][k]
                - neuron.i_ext.values()[k];
        }
        out.push(Signal::new(net.grid(), r)?);
    }
    Ok(out)
}
