//! Spike detection, spike-train comparison and raster-table construction.

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Upward-crossing detector settings. Defaults are calibrated so that spikes
/// overshooting the unit conductance thresholds register cleanly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub threshold_mv: f64,
    pub refractory_ms: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            threshold_mv: 2.0,
            refractory_ms: 3.0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.refractory_ms > 0.0) || !self.refractory_ms.is_finite() {
            return Err(Error::InvalidParameter {
                name: "refractory_ms",
                value: self.refractory_ms,
            });
        }
        if !self.threshold_mv.is_finite() {
            return Err(Error::InvalidParameter {
                name: "threshold_mv",
                value: self.threshold_mv,
            });
        }
        Ok(())
    }
}

/// Detected spike times of one neuron, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    pub neuron_id: usize,
    pub spike_times_ms: Vec<f64>,
}

impl SpikeTrain {
    pub fn new(neuron_id: usize, spike_times_ms: Vec<f64>) -> Result<Self> {
        for (index, pair) in spike_times_ms.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(Error::UnorderedSpikes { index: index + 1 });
            }
        }
        Ok(Self {
            neuron_id,
            spike_times_ms,
        })
    }

    pub fn len(&self) -> usize {
        self.spike_times_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spike_times_ms.is_empty()
    }
}

/// Marks a spike at the first sample of each upward threshold crossing, then
/// ignores further crossings for the refractory window.
pub fn detect_spikes(v: &Signal, neuron_id: usize, cfg: &DetectionConfig) -> Result<SpikeTrain> {
    cfg.validate()?;
    let grid = v.grid();
    let values = v.values();
    let mut times = Vec::new();
    let mut blocked_until = f64::NEG_INFINITY;
    for k in 1..values.len() {
        if values[k - 1] < cfg.threshold_mv && values[k] >= cfg.threshold_mv {
            let t = grid.time_at(k);
            if t >= blocked_until {
                times.push(t);
                blocked_until = t + cfg.refractory_ms;
            }
        }
    }
    SpikeTrain::new(neuron_id, times)
}

/// Outcome of greedy nearest-in-order matching of two trains.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub matched: Vec<(f64, f64)>,
    pub unmatched_a: usize,
    pub unmatched_b: usize,
    /// Largest |t_a - t_b| among matched pairs (0 when nothing matched).
    pub max_offset_ms: f64,
}

impl MatchReport {
    pub fn all_matched(&self) -> bool {
        self.unmatched_a == 0 && self.unmatched_b == 0
    }
}

/// Walks both sorted trains, pairing spikes within `tol_ms` and counting the
/// rest unmatched. Greedy, not optimal assignment; adequate at desk scale.
pub fn compare_trains(a: &SpikeTrain, b: &SpikeTrain, tol_ms: f64) -> Result<MatchReport> {
    if a.neuron_id != b.neuron_id {
        return Err(Error::NeuronMismatch {
            a: a.neuron_id,
            b: b.neuron_id,
        });
    }
    let (ta, tb) = (&a.spike_times_ms, &b.spike_times_ms);
    let mut matched = Vec::new();
    let mut max_offset = 0.0_f64;
    let (mut i, mut j) = (0, 0);
    let mut unmatched_a = 0;
    let mut unmatched_b = 0;
    while i < ta.len() && j < tb.len() {
        let offset = ta[i] - tb[j];
        if offset.abs() <= tol_ms {
            matched.push((ta[i], tb[j]));
            max_offset = max_offset.max(offset.abs());
            i += 1;
            j += 1;
        } else if ta[i] < tb[j] {
            unmatched_a += 1;
            i += 1;
        } else {
            unmatched_b += 1;
            j += 1;
        }
    }
    unmatched_a += ta.len() - i;
    unmatched_b += tb.len() - j;
    Ok(MatchReport {
        matched,
        unmatched_a,
        unmatched_b,
        max_offset_ms: max_offset,
    })
}

/// One raster row: a spike of one neuron with its population label.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterRow {
    pub neuron_id: usize,
    pub t_ms: f64,
    pub label: String,
}

/// Flattens per-neuron trains into a table sorted by neuron id then time.
/// `labels` is indexed by neuron id (e.g. "E" / "I" population tags).
pub fn raster_dataset(trains: &[SpikeTrain], labels: &[String]) -> Result<Vec<RasterRow>> {
    let mut seen = std::collections::HashSet::new();
    for train in trains {
        if !seen.insert(train.neuron_id) {
            return Err(Error::DuplicateNeuron {
                neuron_id: train.neuron_id,
            });
        }
        if train.neuron_id >= labels.len() {
            return Err(Error::MissingLabel {
                neuron_id: train.neuron_id,
                n_labels: labels.len(),
            });
        }
    }
    let mut sorted: Vec<&SpikeTrain> = trains.iter().collect();
    sorted.sort_by_key(|t| t.neuron_id);
    let mut rows = Vec::new();
    for train in sorted {
        for &t in &train.spike_times_ms {
            rows.push(RasterRow {
                neuron_id: train.neuron_id,
                t_ms: t,
                label: labels[train.neuron_id].clone(),
            });
        }
    }
    Ok(rows)
}
