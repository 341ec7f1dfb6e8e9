//! Scenario files: a TOML tree describing the grid, solver, detector and the
//! network itself.
//!
//! Networks are declared as neuron *groups* (a count plus shared parameters)
//! and synapse rules between groups; loading expands them into one entry per
//! neuron and one entry per synapse pair, which is the canonical
//! [`ScenarioConfig`] all downstream code consumes. Serialization writes the
//! expanded form, so load -> serialize -> load is the identity.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use memsplit_core::{
    ConductanceElement, DetectionConfig, Network, NetworkBuilder, ResolventBackend, SolverConfig,
    TimeGrid,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_samples: usize,
    pub duration_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSpec {
    pub alpha: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// "spectral" or "time".
    pub backend: String,
    pub bandwidth_fraction: f64,
    pub rest_value: f64,
    pub divergence_guard: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let cfg = SolverConfig::default();
        Self {
            alpha: cfg.alpha,
            max_iterations: cfg.max_iterations,
            tolerance: cfg.tolerance,
            backend: "spectral".to_string(),
            bandwidth_fraction: 1.0,
            rest_value: 0.0,
            divergence_guard: cfg.divergence_guard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSpec {
    pub threshold_mv: f64,
    pub refractory_ms: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        let cfg = DetectionConfig::default();
        Self {
            threshold_mv: cfg.threshold_mv,
            refractory_ms: cfg.refractory_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSpec {
    /// Spike-time matching tolerance.
    pub tol_ms: f64,
    /// Internal step of the reference integrator.
    pub ab2_dt_ms: f64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            tol_ms: 2.0,
            ab2_dt_ms: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareWaveSpec {
    pub amplitude: f64,
    pub t_on_ms: f64,
    pub t_off_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub g_max: f64,
    pub v_threshold: f64,
    pub tau_ms: f64,
    pub nernst: f64,
}

/// One neuron of the expanded scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronSpec {
    pub label: String,
    pub capacitance: f64,
    pub leak: f64,
    pub branches: Vec<BranchSpec>,
    pub input: Option<SquareWaveSpec>,
}

/// One synapse of the expanded scenario (numeric neuron indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub pre: usize,
    pub post: usize,
    pub g_max: f64,
    pub v_threshold: f64,
    pub tau_ms: f64,
    pub nernst: f64,
    pub enable_after_ms: f64,
}

/// Fully expanded, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub neurons: Vec<NeuronSpec>,
    pub synapses: Vec<SynapseSpec>,
    pub solver: SolverSpec,
    pub detector: DetectorSpec,
    pub compare: CompareSpec,
}

// ---------------------------------------------------------------------------
// Raw file schema (group form).

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum GroupRef {
    Index(usize),
    Name(String),
}

fn default_count() -> usize {
    1
}

fn default_capacitance() -> f64 {
    1.0
}

fn default_leak() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGroup {
    name: String,
    #[serde(default = "default_count")]
    count: usize,
    /// Raster label; defaults to the group name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default = "default_capacitance")]
    capacitance: f64,
    #[serde(default = "default_leak")]
    leak: f64,
    #[serde(default)]
    branches: Vec<BranchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<SquareWaveSpec>,
}

fn default_enable() -> f64 {
    0.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSynapse {
    pre: GroupRef,
    post: GroupRef,
    g_max: f64,
    v_threshold: f64,
    tau_ms: f64,
    nernst: f64,
    #[serde(default = "default_enable")]
    enable_after_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawScenario {
    grid: GridSpec,
    #[serde(default)]
    solver: SolverSpec,
    #[serde(default)]
    detector: DetectorSpec,
    #[serde(default)]
    compare: CompareSpec,
    #[serde(default)]
    groups: Vec<RawGroup>,
    #[serde(default)]
    synapses: Vec<RawSynapse>,
}

fn schema_error(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn expand(raw: RawScenario) -> Result<ScenarioConfig, CliError> {
    let mut neurons = Vec::new();
    let mut members: HashMap<String, Vec<usize>> = HashMap::new();
    for (gi, group) in raw.groups.iter().enumerate() {
        if group.count == 0 {
            return Err(schema_error(
                format!("groups[{gi}].count"),
                "group count must be at least 1",
            ));
        }
        if members.contains_key(&group.name) {
            return Err(schema_error(
                format!("groups[{gi}].name"),
                format!("duplicate group name '{}'", group.name),
            ));
        }
        let ids: Vec<usize> = (0..group.count).map(|k| neurons.len() + k).collect();
        members.insert(group.name.clone(), ids);
        let label = group.label.clone().unwrap_or_else(|| group.name.clone());
        for _ in 0..group.count {
            neurons.push(NeuronSpec {
                label: label.clone(),
                capacitance: group.capacitance,
                leak: group.leak,
                branches: group.branches.clone(),
                input: group.input,
            });
        }
    }

    let resolve = |r: &GroupRef, path: String| -> Result<Vec<usize>, CliError> {
        match r {
            GroupRef::Index(i) => {
                if *i < neurons.len() {
                    Ok(vec![*i])
                } else {
                    Err(schema_error(
                        path,
                        format!("neuron index {i} out of range (network has {})", neurons.len()),
                    ))
                }
            }
            GroupRef::Name(name) => members.get(name).cloned().ok_or_else(|| {
                schema_error(path, format!("unknown group '{name}'"))
            }),
        }
    };

    let mut synapses = Vec::new();
    for (si, syn) in raw.synapses.iter().enumerate() {
        let pres = resolve(&syn.pre, format!("synapses[{si}].pre"))?;
        let posts = resolve(&syn.post, format!("synapses[{si}].post"))?;
        for &pre in &pres {
            for &post in &posts {
                synapses.push(SynapseSpec {
                    pre,
                    post,
                    g_max: syn.g_max,
                    v_threshold: syn.v_threshold,
                    tau_ms: syn.tau_ms,
                    nernst: syn.nernst,
                    enable_after_ms: syn.enable_after_ms,
                });
            }
        }
    }

    let config = ScenarioConfig {
        grid: raw.grid,
        neurons,
        synapses,
        solver: raw.solver,
        detector: raw.detector,
        compare: raw.compare,
    };
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    /// Every constraint of the expanded scenario; violations name the field.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        if g.n_samples < 4 || g.n_samples % 2 != 0 {
            return Err(schema_error(
                "grid.n_samples",
                format!("must be even and >= 4, got {}", g.n_samples),
            ));
        }
        if !(g.duration_ms > 0.0) {
            return Err(schema_error(
                "grid.duration_ms",
                format!("must be positive, got {}", g.duration_ms),
            ));
        }

        let s = &self.solver;
        if !(s.alpha > 0.0) {
            return Err(schema_error("solver.alpha", format!("must be positive, got {}", s.alpha)));
        }
        if !(s.tolerance > 0.0) {
            return Err(schema_error(
                "solver.tolerance",
                format!("must be positive, got {}", s.tolerance),
            ));
        }
        if s.max_iterations == 0 {
            return Err(schema_error("solver.max_iterations", "must be at least 1"));
        }
        if !(s.bandwidth_fraction > 0.0 && s.bandwidth_fraction <= 1.0) {
            return Err(schema_error(
                "solver.bandwidth_fraction",
                format!("must lie in (0, 1], got {}", s.bandwidth_fraction),
            ));
        }
        if !(s.divergence_guard > 0.0) {
            return Err(schema_error(
                "solver.divergence_guard",
                format!("must be positive, got {}", s.divergence_guard),
            ));
        }
        if s.backend != "spectral" && s.backend != "time" {
            return Err(schema_error(
                "solver.backend",
                format!("must be \"spectral\" or \"time\", got \"{}\"", s.backend),
            ));
        }

        if !(self.detector.refractory_ms > 0.0) {
            return Err(schema_error(
                "detector.refractory_ms",
                format!("must be positive, got {}", self.detector.refractory_ms),
            ));
        }
        if !(self.compare.tol_ms > 0.0) {
            return Err(schema_error(
                "compare.tol_ms",
                format!("must be positive, got {}", self.compare.tol_ms),
            ));
        }
        let grid_dt = g.duration_ms / g.n_samples as f64;
        if !(self.compare.ab2_dt_ms > 0.0 && self.compare.ab2_dt_ms <= grid_dt) {
            return Err(schema_error(
                "compare.ab2_dt_ms",
                format!(
                    "must lie in (0, grid dt = {grid_dt}], got {}",
                    self.compare.ab2_dt_ms
                ),
            ));
        }

        if self.neurons.is_empty() {
            return Err(schema_error("groups", "scenario declares no neurons"));
        }
        for (i, n) in self.neurons.iter().enumerate() {
            if !(n.capacitance > 0.0) || !n.capacitance.is_finite() {
                return Err(schema_error(
                    format!("neurons[{i}].capacitance"),
                    format!("must be positive, got {}", n.capacitance),
                ));
            }
            if !(n.leak >= 0.0) || !n.leak.is_finite() {
                return Err(schema_error(
                    format!("neurons[{i}].leak"),
                    format!("must be nonnegative, got {}", n.leak),
                ));
            }
            for (bi, b) in n.branches.iter().enumerate() {
                let path = |f: &str| format!("neurons[{i}].branches[{bi}].{f}");
                if !(b.g_max >= 0.0) || !b.g_max.is_finite() {
                    return Err(schema_error(path("g_max"), format!("must be nonnegative, got {}", b.g_max)));
                }
                if !(b.tau_ms >= 0.0) || !b.tau_ms.is_finite() {
                    return Err(schema_error(path("tau_ms"), format!("must be nonnegative, got {}", b.tau_ms)));
                }
            }
            if let Some(w) = &n.input {
                if !(0.0 <= w.t_on_ms && w.t_on_ms < w.t_off_ms && w.t_off_ms <= g.duration_ms) {
                    return Err(schema_error(
                        format!("neurons[{i}].input"),
                        format!(
                            "window [{}, {}) must satisfy 0 <= t_on < t_off <= duration {}",
                            w.t_on_ms, w.t_off_ms, g.duration_ms
                        ),
                    ));
                }
                if !w.amplitude.is_finite() {
                    return Err(schema_error(
                        format!("neurons[{i}].input.amplitude"),
                        "must be finite",
                    ));
                }
            }
        }
        for (si, s) in self.synapses.iter().enumerate() {
            let path = |f: &str| format!("synapses[{si}].{f}");
            if s.pre >= self.neurons.len() {
                return Err(schema_error(path("pre"), format!("neuron index {} out of range", s.pre)));
            }
            if s.post >= self.neurons.len() {
                return Err(schema_error(path("post"), format!("neuron index {} out of range", s.post)));
            }
            if !(s.g_max >= 0.0) || !s.g_max.is_finite() {
                return Err(schema_error(path("g_max"), format!("must be nonnegative, got {}", s.g_max)));
            }
            if !(s.tau_ms >= 0.0) || !s.tau_ms.is_finite() {
                return Err(schema_error(path("tau_ms"), format!("must be nonnegative, got {}", s.tau_ms)));
            }
            if !(s.enable_after_ms >= 0.0) || !s.enable_after_ms.is_finite() {
                return Err(schema_error(
                    path("enable_after_ms"),
                    format!("must be nonnegative, got {}", s.enable_after_ms),
                ));
            }
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.grid.n_samples, self.grid.duration_ms)
            .map_err(|e| schema_error("grid", e.to_string()))
    }

    pub fn backend(&self) -> ResolventBackend {
        if self.solver.backend == "time" {
            ResolventBackend::TimeDomain {
                rest_value: self.solver.rest_value,
            }
        } else {
            ResolventBackend::Spectral {
                bandwidth_fraction: self.solver.bandwidth_fraction,
            }
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            alpha: self.solver.alpha,
            max_iterations: self.solver.max_iterations,
            tolerance: self.solver.tolerance,
            backend: self.backend(),
            initial_guess: memsplit_core::InitialGuess::Rest,
            divergence_guard: self.solver.divergence_guard,
        }
    }

    pub fn detection_config(&self) -> DetectionConfig {
        DetectionConfig {
            threshold_mv: self.detector.threshold_mv,
            refractory_ms: self.detector.refractory_ms,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.neurons.iter().map(|n| n.label.clone()).collect()
    }

    /// Builds the core network (stimuli sampled onto the grid).
    pub fn build_network(&self) -> Result<Network, CliError> {
        let grid = self.time_grid()?;
        let mut builder = NetworkBuilder::new(grid);
        for (i, n) in self.neurons.iter().enumerate() {
            let input = match &n.input {
                Some(w) => Some(
                    memsplit_core::square_wave(grid, w.amplitude, w.t_on_ms, w.t_off_ms)
                        .map_err(|e| schema_error(format!("neurons[{i}].input"), e.to_string()))?,
                ),
                None => None,
            };
            builder.add_neuron(n.capacitance, n.leak, input);
            for (bi, b) in n.branches.iter().enumerate() {
                let element = ConductanceElement::new(b.g_max, b.v_threshold, b.tau_ms)
                    .map_err(|e| {
                        schema_error(format!("neurons[{i}].branches[{bi}]"), e.to_string())
                    })?;
                builder.add_internal_branch(i, element, b.nernst);
            }
        }
        for (si, s) in self.synapses.iter().enumerate() {
            let element = ConductanceElement::new(s.g_max, s.v_threshold, s.tau_ms)
                .map_err(|e| schema_error(format!("synapses[{si}]"), e.to_string()))?;
            builder.add_synapse(s.pre, s.post, element, s.nernst, s.enable_after_ms);
        }
        builder
            .build()
            .map_err(|e| schema_error("network", e.to_string()))
    }

    /// Canonical serialization: one group per neuron, numeric synapse refs.
    pub fn to_toml(&self) -> String {
        let raw = RawScenario {
            grid: self.grid,
            solver: self.solver.clone(),
            detector: self.detector,
            compare: self.compare,
            groups: self
                .neurons
                .iter()
                .enumerate()
                .map(|(i, n)| RawGroup {
                    name: format!("n{i}"),
                    count: 1,
                    label: Some(n.label.clone()),
                    capacitance: n.capacitance,
                    leak: n.leak,
                    branches: n.branches.clone(),
                    input: n.input,
                })
                .collect(),
            synapses: self
                .synapses
                .iter()
                .map(|s| RawSynapse {
                    pre: GroupRef::Index(s.pre),
                    post: GroupRef::Index(s.post),
                    g_max: s.g_max,
                    v_threshold: s.v_threshold,
                    tau_ms: s.tau_ms,
                    nernst: s.nernst,
                    enable_after_ms: s.enable_after_ms,
                })
                .collect(),
        };
        toml::to_string_pretty(&raw).expect("scenario serializes")
    }
}

/// Reads, expands and validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, CliError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        message: format!("cannot read file: {e}"),
    })?;
    parse_config(&text)
}

/// [`load_config`] for in-memory text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| CliError::Config {
        path: String::new(),
        message: format!("parse error: {e}"),
    })?;
    expand(raw)
}
