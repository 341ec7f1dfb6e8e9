//! The differentiation operator `D`, its resolvent `(I + gamma*D)^-1`, and the
//! first-order low-pass `(tau*D + I)^-1`, each with a spectral and a
//! time-domain evaluation path, plus a dense-matrix oracle for testing.
//!
//! Conventions:
//!
//! * The spectral derivative multiplies bin `k` by `i*w_k` with the Nyquist
//!   coefficient forced to zero (its `i*w` term would be purely imaginary).
//!   The spectral resolvent and low-pass invert `I + gamma*D` against that
//!   same symbol, so their Nyquist gain is exactly 1 and real output is
//!   preserved.
//! * The time-domain path discretizes `D` with backward differences anchored
//!   at a resting value before the first sample, and solves the bidiagonal
//!   system by forward substitution in O(n). No periodic wrap-around: the two
//!   paths agree on signals that start and end at rest.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{fft_forward, from_spectrum_unchecked, Signal};

/// How resolvents and low-pass filters are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolventBackend {
    /// FFT diagonalization, O(n log n). `bandwidth_fraction` in (0, 1] keeps
    /// bins with |k| <= fraction * n/2 and zeroes the rest of the resolvent
    /// output (1.0 = no truncation).
    Spectral { bandwidth_fraction: f64 },
    /// Backward-difference forward substitution, O(n), anchored at
    /// `rest_value` before sample 0.
    TimeDomain { rest_value: f64 },
}

impl ResolventBackend {
    pub fn spectral() -> Self {
        Self::Spectral {
            bandwidth_fraction: 1.0,
        }
    }

    pub fn time_domain() -> Self {
        Self::TimeDomain { rest_value: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Spectral { bandwidth_fraction } = *self {
            if !(bandwidth_fraction > 0.0 && bandwidth_fraction <= 1.0) {
                return Err(Error::InvalidBandwidth {
                    fraction: bandwidth_fraction,
                });
            }
        }
        Ok(())
    }
}

impl Default for ResolventBackend {
    fn default() -> Self {
        Self::spectral()
    }
}

/// Derivative symbol of bin `k`: `i*w_k`, zero at Nyquist.
fn derivative_symbol(grid: &crate::signal::TimeGrid, k: usize) -> Complex64 {
    if k == grid.n_samples() / 2 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, grid.angular_frequency(k))
    }
}

/// Spectral derivative of a periodic signal.
pub fn derivative(s: &Signal) -> Signal {
    let grid = s.grid();
    let mut buf: Vec<Complex64> = s.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        *c *= derivative_symbol(&grid, k);
    }
    from_spectrum_unchecked(grid, buf)
}

fn spectral_filter(s: &Signal, gamma: f64, bandwidth_fraction: f64) -> Signal {
    let grid = s.grid();
    let n = grid.n_samples();
    let keep = bandwidth_fraction * n as f64 / 2.0;
    let mut buf: Vec<Complex64> = s.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let k_mag = k.min(n - k);
        if (k_mag as f64) > keep {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c /= Complex64::new(1.0, 0.0) + gamma * derivative_symbol(&grid, k);
        }
    }
    from_spectrum_unchecked(grid, buf)
}

/// Forward substitution for `(I + gamma*D_bd) x = s` with backward differences
/// `(x_k - x_{k-1}) / dt` and anchor `x_{-1} = rest_value`.
fn backward_difference_solve(s: &Signal, gamma: f64, rest_value: f64) -> Signal {
    let grid = s.grid();
    let r = gamma / grid.dt_ms();
    let mut out = Vec::with_capacity(grid.n_samples());
    let mut prev = rest_value;
    for &v in s.values() {
        prev = (v + r * prev) / (1.0 + r);
        out.push(prev);
    }
    Signal::from_raw(grid, out)
}

/// Resolvent `J_{gamma D} = (I + gamma*D)^-1` of the differentiation operator.
pub fn resolvent_d(s: &Signal, gamma: f64, backend: &ResolventBackend) -> Result<Signal> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidStep { gamma });
    }
    backend.validate()?;
    Ok(match *backend {
        ResolventBackend::Spectral { bandwidth_fraction } => {
            spectral_filter(s, gamma, bandwidth_fraction)
        }
        ResolventBackend::TimeDomain { rest_value } => {
            backward_difference_solve(s, gamma, rest_value)
        }
    })
}

/// First-order low-pass `(tau*D + I)^-1`; `tau_ms = 0` is the identity.
pub fn lowpass(s: &Signal, tau_ms: f64, backend: &ResolventBackend) -> Result<Signal> {
    if tau_ms < 0.0 || !tau_ms.is_finite() {
        return Err(Error::InvalidTimescale { tau_ms });
    }
    backend.validate()?;
    if tau_ms == 0.0 {
        return Ok(s.clone());
    }
    Ok(match *backend {
        // No bandwidth truncation here; truncation is a resolvent feature.
        ResolventBackend::Spectral { .. } => spectral_filter(s, tau_ms, 1.0),
        ResolventBackend::TimeDomain { rest_value } => {
            backward_difference_solve(s, tau_ms, rest_value)
        }
    })
}

/// Ground truth for the time-domain resolvent: materializes `I + gamma*D_bd`
/// (rest anchor 0) as a dense matrix and solves by LU elimination.
pub fn dense_resolvent_oracle(s: &Signal, gamma: f64) -> Result<Signal> {
    let grid = s.grid();
    let n = grid.n_samples();
    if n > 4096 {
        return Err(Error::OracleSize { n_samples: n });
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidStep { gamma });
    }
    let r = gamma / grid.dt_ms();
    let a = DMatrix::<f64>::from_fn(n, n, |row, col| {
        if row == col {
            1.0 + r
        } else if col + 1 == row {
            -r
        } else {
            0.0
        }
    });
    let b = DVector::from_column_slice(s.values());
    let x = a
        .lu()
        .solve(&b)
        .expect("bidiagonal resolvent matrix is nonsingular");
    Signal::new(grid, x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{inner_product, l2_norm, Signal, TimeGrid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random_signal(grid: TimeGrid, seed: u64) -> Signal {
        let mut rng = StdRng::seed_from_u64(seed);
        Signal::new(
            grid,
            (0..grid.n_samples()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Random trigonometric polynomial up to `k_max`, zero-mean optional.
    fn band_limited(grid: TimeGrid, k_max: usize, seed: u64) -> Signal {
        let mut rng = StdRng::seed_from_u64(seed);
        let coeffs: Vec<(f64, f64, f64)> = (1..=k_max)
            .map(|k| {
                (
                    2.0 * PI * k as f64 / grid.duration_ms(),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        Signal::from_fn(grid, |t| {
            coeffs
                .iter()
                .map(|&(w, a, b)| a * (w * t).sin() + b * (w * t).cos())
                .sum()
        })
        .unwrap()
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = TimeGrid::new(64, 10.0).unwrap();
        let d = derivative(&Signal::constant(g, 3.0).unwrap());
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn derivative_of_tone_is_analytic() {
        let g = TimeGrid::new(256, 16.0).unwrap();
        let w = 2.0 * PI * 2.0 / 16.0;
        let s = Signal::from_fn(g, |t| (w * t).sin()).unwrap();
        let d = derivative(&s);
        let expected = Signal::from_fn(g, |t| w * (w * t).cos()).unwrap();
        let err = d
            .values()
            .iter()
            .zip(expected.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-8, "max err {err}");
    }

    #[test]
    fn derivative_matches_central_differences_at_second_order() {
        // Central finite differences are the independent oracle; the error
        // must shrink ~4x when dt halves.
        let errs: Vec<f64> = [256usize, 512]
            .iter()
            .map(|&n| {
                let g = TimeGrid::new(n, 20.0).unwrap();
                let s = band_limited(g, 6, 11);
                let d = derivative(&s);
                let dt = g.dt_ms();
                let v = s.values();
                let mut max_err = 0.0_f64;
                for k in 0..n {
                    let fd = (v[(k + 1) % n] - v[(k + n - 1) % n]) / (2.0 * dt);
                    max_err = max_err.max((d.values()[k] - fd).abs());
                }
                max_err
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!(
            (3.5..=4.5).contains(&ratio),
            "finite-difference error ratio {ratio}, errs {errs:?}"
        );
    }

    #[test]
    fn derivative_is_skew_adjoint() {
        let g = TimeGrid::new(128, 10.0).unwrap();
        for seed in 0..20 {
            let s = random_signal(g, seed);
            let ip = inner_product(&s, &derivative(&s)).unwrap();
            assert!(
                ip.abs() <= 1e-9 * l2_norm(&s).powi(2),
                "<s, Ds> = {ip} too large"
            );
        }
    }

    #[test]
    fn resolvent_rejects_bad_gamma() {
        let g = TimeGrid::new(64, 10.0).unwrap();
        let s = Signal::zeros(g);
        assert!(matches!(
            resolvent_d(&s, 0.0, &ResolventBackend::spectral()),
            Err(Error::InvalidStep { .. })
        ));
        assert!(resolvent_d(&s, -1.0, &ResolventBackend::time_domain()).is_err());
    }

    #[test]
    fn resolvent_spectral_dc_gain_is_one() {
        let g = TimeGrid::new(64, 10.0).unwrap();
        let c = Signal::constant(g, 4.2).unwrap();
        let out = resolvent_d(&c, 3.7, &ResolventBackend::spectral()).unwrap();
        for &v in out.values() {
            assert_relative_eq!(v, 4.2, epsilon = 1e-10);
        }
    }

    #[test]
    fn resolvent_spectral_tone_gain_matches_transfer_function() {
        let g = TimeGrid::new(512, 32.0).unwrap();
        let gamma = 0.8;
        for bin in [1usize, 5, 17] {
            let w = 2.0 * PI * bin as f64 / 32.0;
            let s = Signal::from_fn(g, |t| (w * t).sin()).unwrap();
            let out = resolvent_d(&s, gamma, &ResolventBackend::spectral()).unwrap();
            let gain = 1.0 / (1.0 + (gamma * w).powi(2)).sqrt();
            let phase = -(gamma * w).atan();
            let expected = Signal::from_fn(g, |t| gain * (w * t + phase).sin()).unwrap();
            let err = out
                .values()
                .iter()
                .zip(expected.values())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-8, "bin {bin}: max err {err}");
        }
    }

    #[test]
    fn resolvent_bandwidth_truncation_zeroes_high_bins() {
        let g = TimeGrid::new(128, 16.0).unwrap();
        let backend = ResolventBackend::Spectral {
            bandwidth_fraction: 0.5,
        };
        // Tone above the retained band vanishes; DC passes untouched.
        let w = 2.0 * PI * 50.0 / 16.0; // bin 50 > 0.5 * 64
        let tone = Signal::from_fn(g, |t| (w * t).sin()).unwrap();
        let out = resolvent_d(&tone, 0.5, &backend).unwrap();
        assert!(out.max_abs() < 1e-10);
        let c = Signal::constant(g, 1.5).unwrap();
        let out = resolvent_d(&c, 0.5, &backend).unwrap();
        assert_relative_eq!(out.values()[3], 1.5, epsilon = 1e-10);
    }

    #[test]
    fn resolvent_time_domain_matches_dense_oracle() {
        let g = TimeGrid::new(64, 8.0).unwrap();
        for seed in 0..10 {
            let s = random_signal(g, seed);
            let fast = resolvent_d(&s, 0.37, &ResolventBackend::time_domain()).unwrap();
            let oracle = dense_resolvent_oracle(&s, 0.37).unwrap();
            let num: f64 = fast
                .values()
                .iter()
                .zip(oracle.values())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let den: f64 = oracle.values().iter().map(|v| v * v).sum();
            assert!((num / den).sqrt() < 1e-10);
        }
    }

    #[test]
    fn dense_oracle_small_gamma_limit() {
        let g = TimeGrid::new(32, 4.0).unwrap();
        let s = band_limited(g, 3, 5);
        let gamma = 1e-6;
        let out = dense_resolvent_oracle(&s, gamma).unwrap();
        let bound = gamma * derivative(&s).max_abs() * 4.0 + 1e-12;
        let err = out
            .values()
            .iter()
            .zip(s.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= bound, "err {err} bound {bound}");
    }

    #[test]
    fn dense_oracle_preserves_constants() {
        let g = TimeGrid::new(32, 4.0).unwrap();
        let c = Signal::constant(g, -2.0).unwrap();
        let out = dense_resolvent_oracle(&c, 1.3).unwrap();
        // Constant input with rest anchor 0 relaxes onto the constant.
        let last = out.values()[31];
        assert!((last + 2.0).abs() < 0.4, "tail {last}");
        // With matching rest value the recursion holds the constant exactly.
        let exact = resolvent_d(&c, 1.3, &ResolventBackend::TimeDomain { rest_value: -2.0 }).unwrap();
        for &v in exact.values() {
            assert_relative_eq!(v, -2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dense_oracle_rejects_oversized_grid() {
        let g = TimeGrid::new(8192, 10.0).unwrap();
        let s = Signal::zeros(g);
        assert!(matches!(
            dense_resolvent_oracle(&s, 1.0),
            Err(Error::OracleSize { .. })
        ));
    }

    #[test]
    fn backends_agree_on_smooth_rested_input() {
        // Smooth bump, at rest at both ends of the period.
        let g = TimeGrid::new(1024, 100.0).unwrap();
        let s = Signal::from_fn(g, |t| (-((t - 50.0) / 10.0).powi(2)).exp()).unwrap();
        let gamma = 1.0;
        let spec = resolvent_d(&s, gamma, &ResolventBackend::spectral()).unwrap();
        let time = resolvent_d(&s, gamma, &ResolventBackend::time_domain()).unwrap();
        let num: f64 = spec
            .values()
            .iter()
            .zip(time.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = spec.values().iter().map(|v| v * v).sum();
        let rel = (num / den).sqrt();
        assert!(rel < 0.02, "backend disagreement {rel}");
    }

    #[test]
    fn lowpass_validates_and_short_circuits() {
        let g = TimeGrid::new(64, 10.0).unwrap();
        let s = random_signal(g, 1);
        assert!(matches!(
            lowpass(&s, -1.0, &ResolventBackend::spectral()),
            Err(Error::InvalidTimescale { .. })
        ));
        let same = lowpass(&s, 0.0, &ResolventBackend::spectral()).unwrap();
        assert_eq!(same, s);
        let c = Signal::constant(g, 2.0).unwrap();
        let out = lowpass(&c, 10.0, &ResolventBackend::spectral()).unwrap();
        for &v in out.values() {
            assert_relative_eq!(v, 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn lowpass_step_response_is_first_order() {
        let g = TimeGrid::new(40000, 200.0).unwrap();
        let tau = 10.0;
        let s = crate::signal::square_wave(g, 1.0, 0.0, 200.0).unwrap();
        let out = lowpass(&s, tau, &ResolventBackend::time_domain()).unwrap();
        let mut max_err = 0.0_f64;
        for (k, &v) in out.values().iter().enumerate() {
            // Backward-Euler output at t_k approximates the response at t_k + dt.
            let t = g.time_at(k) + g.dt_ms();
            let analytic = 1.0 - (-t / tau).exp();
            max_err = max_err.max((v - analytic).abs());
        }
        assert!(max_err < 1e-3, "step response error {max_err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn resolvent_is_nonexpansive(
            a in proptest::collection::vec(-5.0_f64..5.0, 64),
            b in proptest::collection::vec(-5.0_f64..5.0, 64),
            gamma in 0.01_f64..10.0,
        ) {
            let g = TimeGrid::new(64, 6.4).unwrap();
            let sa = Signal::new(g, a).unwrap();
            let sb = Signal::new(g, b).unwrap();
            let backend = ResolventBackend::spectral();
            let ja = resolvent_d(&sa, gamma, &backend).unwrap();
            let jb = resolvent_d(&sb, gamma, &backend).unwrap();
            let out_dist = l2_norm(&Signal::new(g, ja.values().iter().zip(jb.values()).map(|(x, y)| x - y).collect()).unwrap());
            let in_dist = l2_norm(&Signal::new(g, sa.values().iter().zip(sb.values()).map(|(x, y)| x - y).collect()).unwrap());
            prop_assert!(out_dist <= in_dist * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn resolvent_is_linear(
            a in proptest::collection::vec(-5.0_f64..5.0, 64),
            b in proptest::collection::vec(-5.0_f64..5.0, 64),
            ca in -3.0_f64..3.0,
            cb in -3.0_f64..3.0,
        ) {
            let g = TimeGrid::new(64, 6.4).unwrap();
            let sa = Signal::new(g, a).unwrap();
            let sb = Signal::new(g, b).unwrap();
            let combo = Signal::new(g, sa.values().iter().zip(sb.values()).map(|(x, y)| ca * x + cb * y).collect()).unwrap();
            for backend in [ResolventBackend::spectral(), ResolventBackend::time_domain()] {
                let lhs = resolvent_d(&combo, 0.9, &backend).unwrap();
                let ja = resolvent_d(&sa, 0.9, &backend).unwrap();
                let jb = resolvent_d(&sb, 0.9, &backend).unwrap();
                let max_err = lhs.values().iter().enumerate()
                    .fold(0.0_f64, |m, (k, v)| m.max((v - (ca * ja.values()[k] + cb * jb.values()[k])).abs()));
                let scale = lhs.max_abs().max(1.0);
                prop_assert!(max_err <= 1e-10 * scale, "{max_err}");
            }
        }
    }
}
