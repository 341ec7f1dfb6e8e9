//! Uniform periodic time grids, real-valued signals on them, their spectra,
//! and stimulus generators.
//!
//! A [`Signal`] holds one real sample per grid point of a period and is the
//! universal currency of the crate: membrane voltages (mV), currents (uA) and
//! conductances (mS) are all `Signal`s. The inner product is the rectangle
//! rule `sum(u_k * y_k) * dt`, so norms approximate the continuous L2 norm
//! over one period.
//!
//! Spectral convention: the forward transform is unnormalized, the inverse
//! divides by `n`. Under that convention Parseval reads
//! `<s, s> = (sum_k |c_k|^2) * T / n^2`. Bin `k` carries angular frequency
//! `w_k = 2*pi*k/T` for `k <= n/2` and `2*pi*(k - n)/T` above.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A uniform sampling of one period `[0, T)`, sample `k` at `t_k = k * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_samples: usize,
    duration_ms: f64,
}

impl TimeGrid {
    /// Builds a grid with `n_samples` points over `duration_ms` milliseconds.
    ///
    /// `n_samples` must be even and at least 4 so the Nyquist bin is well
    /// defined for the spectral operators.
    pub fn new(n_samples: usize, duration_ms: f64) -> Result<Self> {
        if n_samples < 4 || n_samples % 2 != 0 {
            return Err(Error::InvalidGrid { n_samples });
        }
        if !(duration_ms > 0.0) || !duration_ms.is_finite() {
            return Err(Error::InvalidDuration { duration_ms });
        }
        Ok(Self {
            n_samples,
            duration_ms,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn duration_ms(&self) -> f64 {
        self.duration_ms
    }

    pub fn dt_ms(&self) -> f64 {
        self.duration_ms / self.n_samples as f64
    }

    /// Time of sample `k` (left bin edge, no staggering).
    pub fn time_at(&self, k: usize) -> f64 {
        k as f64 * self.dt_ms()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(|k| self.time_at(k))
    }

    /// Angular frequency of spectral bin `k` in rad/ms (signed convention).
    pub fn angular_frequency(&self, k: usize) -> f64 {
        debug_assert!(k < self.n_samples);
        let n = self.n_samples as f64;
        let signed = if k <= self.n_samples / 2 {
            k as f64
        } else {
            k as f64 - n
        };
        2.0 * std::f64::consts::PI * signed / self.duration_ms
    }
}

/// Real samples on a [`TimeGrid`]; values are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_samples() {
            return Err(Error::LengthMismatch {
                expected: grid.n_samples(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_raw(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_samples());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { grid, values }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self::from_raw(grid, vec![0.0; grid.n_samples()])
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_samples()])
    }

    /// Samples `f(t_k)` over the grid.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.times().map(f).collect())
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Square pulse: `amplitude` on `t_on_ms <= t < t_off_ms`, zero elsewhere.
pub fn square_wave(grid: TimeGrid, amplitude: f64, t_on_ms: f64, t_off_ms: f64) -> Result<Signal> {
    if !(0.0 <= t_on_ms && t_on_ms < t_off_ms && t_off_ms <= grid.duration_ms()) {
        return Err(Error::InvalidWindow { t_on_ms, t_off_ms });
    }
    Signal::new(
        grid,
        grid.times()
            .map(|t| if t >= t_on_ms && t < t_off_ms { amplitude } else { 0.0 })
            .collect(),
    )
}

/// Rectangle-rule inner product `sum(u_k * y_k) * dt` over one period.
pub fn inner_product(u: &Signal, y: &Signal) -> Result<f64> {
    if u.grid() != y.grid() {
        return Err(Error::IncompatibleSignals);
    }
    let dot: f64 = u.values().iter().zip(y.values()).map(|(a, b)| a * b).sum();
    Ok(dot * u.grid().dt_ms())
}

/// L2 norm induced by [`inner_product`].
pub fn l2_norm(s: &Signal) -> f64 {
    let dot: f64 = s.values().iter().map(|v| v * v).sum();
    (dot * s.grid().dt_ms()).sqrt()
}

/// Complex DFT coefficients of a signal, one per grid sample.
///
/// Real signals produce conjugate-symmetric spectra; [`from_spectrum`]
/// rejects anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: TimeGrid,
    coefficients: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: TimeGrid, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.n_samples() {
            return Err(Error::LengthMismatch {
                expected: grid.n_samples(),
                got: coefficients.len(),
            });
        }
        Ok(Self { grid, coefficients })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Angular frequency of bin `k` in rad/ms.
    pub fn angular_frequency(&self, k: usize) -> f64 {
        self.grid.angular_frequency(k)
    }

    fn max_asymmetry(&self) -> (usize, f64) {
        let n = self.coefficients.len();
        let mut worst = (0, 0.0_f64);
        for k in 0..n {
            let mirror = self.coefficients[(n - k) % n].conj();
            let asym = (self.coefficients[k] - mirror).norm();
            if asym > worst.1 {
                worst = (k, asym);
            }
        }
        worst
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_forward(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

pub(crate) fn fft_inverse(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
}

/// Forward transform (unnormalized).
pub fn to_spectrum(s: &Signal) -> Spectrum {
    let mut buf: Vec<Complex64> = s.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    Spectrum {
        grid: s.grid(),
        coefficients: buf,
    }
}

/// Inverse transform (divides by `n`); requires a conjugate-symmetric input.
pub fn from_spectrum(sp: &Spectrum) -> Result<Signal> {
    let (bin, asymmetry) = sp.max_asymmetry();
    let scale = sp
        .coefficients
        .iter()
        .fold(0.0_f64, |m, c| m.max(c.norm()))
        .max(1.0);
    if asymmetry > 1e-8 * scale {
        return Err(Error::AsymmetricSpectrum { bin, asymmetry });
    }
    let mut buf = sp.coefficients.clone();
    fft_inverse(&mut buf);
    let n = buf.len() as f64;
    Signal::new(sp.grid, buf.iter().map(|c| c.re / n).collect())
}

/// Inverse transform for spectra that are symmetric by construction.
pub(crate) fn from_spectrum_unchecked(grid: TimeGrid, mut buf: Vec<Complex64>) -> Signal {
    fft_inverse(&mut buf);
    let n = buf.len() as f64;
    Signal::from_raw(grid, buf.iter().map(|c| c.re / n).collect())
}
