//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid grid: n_samples = {n_samples} must be even and >= 4")]
    InvalidGrid { n_samples: usize },

    #[error("invalid grid: duration_ms = {duration_ms} must be positive and finite")]
    InvalidDuration { duration_ms: f64 },

    #[error("signal has {got} values but its grid has {expected} samples")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value {value} at sample {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid window: t_on = {t_on_ms} ms, t_off = {t_off_ms} ms (need 0 <= t_on < t_off <= duration)")]
    InvalidWindow { t_on_ms: f64, t_off_ms: f64 },

    #[error("signals live on different grids")]
    IncompatibleSignals,

    #[error("spectrum is not conjugate-symmetric (max asymmetry {asymmetry:.3e} at bin {bin})")]
    AsymmetricSpectrum { bin: usize, asymmetry: f64 },

    #[error("invalid resolvent step: gamma = {gamma} must be positive")]
    InvalidStep { gamma: f64 },

    #[error("invalid timescale: tau = {tau_ms} ms must be nonnegative")]
    InvalidTimescale { tau_ms: f64 },

    #[error("invalid bandwidth fraction {fraction} (must lie in (0, 1])")]
    InvalidBandwidth { fraction: f64 },

    #[error("dense oracle limited to 4096 samples, got {n_samples}")]
    OracleSize { n_samples: usize },

    #[error("branch references unknown neuron {neuron_id} (network has {n_neurons})")]
    UnknownNeuron { neuron_id: usize, n_neurons: usize },

    #[error("invalid model parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("voltage ensemble has {got} signals, network has {expected} neurons")]
    EnsembleSizeMismatch { expected: usize, got: usize },

    #[error("invalid solver config: {reason}")]
    InvalidSolverConfig { reason: &'static str },

    #[error("solver diverged at iteration {iteration} (max |v| = {max_abs:.3e})")]
    Divergence { iteration: usize, max_abs: f64 },

    #[error("integrator state became non-finite at t = {t_ms} ms")]
    IntegrationDiverged { t_ms: f64 },

    #[error("integrator step {dt_ms} ms exceeds output grid spacing {grid_dt_ms} ms")]
    InvalidIntegratorStep { dt_ms: f64, grid_dt_ms: f64 },

    #[error("spike times are not strictly increasing at index {index}")]
    UnorderedSpikes { index: usize },

    #[error("spike trains belong to different neurons ({a} vs {b})")]
    NeuronMismatch { a: usize, b: usize },

    #[error("duplicate neuron id {neuron_id} in raster input")]
    DuplicateNeuron { neuron_id: usize },

    #[error("neuron {neuron_id} has no label (labels cover {n_labels} neurons)")]
    MissingLabel { neuron_id: usize, n_labels: usize },
}
