//! Solver core for memristive (conductance-based) spiking networks.
//!
//! The electrical behavior of a network of capacitors, batteries and
//! voltage-gated conductances is posed as a periodic zero-finding problem
//! `c*Dv + G_tot(v).*v - (N_tot(v) + i_ext) = 0` over one period of signals
//! and solved by variable-metric forward-backward splitting: a forward step
//! through the conductance-scaled identity plus offset, a backward step
//! through the resolvent of the derivative operator. An Adams-Bashforth
//! two-step integrator provides an independent state-space oracle, and the
//! spike toolkit turns voltage traces into comparable spike trains.
//!
//! Modules:
//!
//! * [`signal`] - periodic grids, signals, spectra, stimuli.
//! * [`lti`] - derivative, resolvents, low-pass filters (spectral and
//!   time-domain backends).
//! * [`model`] - neurons, branches, total conductance/drive, residual.
//! * [`solver`] - the splitting iteration with convergence diagnostics.
//! * [`reference`] - the Adams-Bashforth cross-validation integrator.
//! * [`spikes`] - spike detection, train comparison, raster tables.

pub mod error;
pub mod lti;
pub mod model;
pub mod reference;
pub mod signal;
pub mod solver;
pub mod spikes;

pub use error::{Error, Result};
pub use lti::{dense_resolvent_oracle, derivative, lowpass, resolvent_d, ResolventBackend};
pub use model::{
    gate_conductance, network_residual, total_conductance, total_drive, Branch,
    ConductanceElement, Network, NetworkBuilder, Neuron, NeuronId, VoltageEnsemble,
};
pub use reference::{integrate_ab2, IntegratorConfig};
pub use signal::{
    from_spectrum, inner_product, l2_norm, square_wave, to_spectrum, Signal, Spectrum, TimeGrid,
};
pub use solver::{
    solve, solve_with_progress, vmfbs_step, InitialGuess, ProgressEvent, SolveResult, SolverConfig,
};
pub use spikes::{
    compare_trains, detect_spikes, raster_dataset, DetectionConfig, MatchReport, RasterRow,
    SpikeTrain,
};
