//! Phase mismatch, pump convolution Φ(νs, νi, z) and joint spectral amplitude Q(νs, νi).
//!
//! All amplitudes take the pump field amplitude as one; only relative
//! values are meaningful downstream.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::export::fmt_num;
use crate::quadrature::{integrate_1d, QuadratureError, QuadratureSettings};
use crate::units::ExperimentConfig;

#[derive(Debug, Error)]
pub enum JsaError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("i/o error writing grid: {0}")]
    Io(#[from] std::io::Error),
}

/// Wave-vector mismatch Δk (1/m) to second order in dispersion.
///
/// `nu_p` is the detuning of pump 1 from its centre, `nu_s`/`nu_i` the
/// detunings of signal and idler from Ω.
pub fn delta_k(nu_p: f64, nu_s: f64, nu_i: f64, cfg: &ExperimentConfig) -> f64 {
    let offset = 0.5 * cfg.delta_rad_per_ps - nu_p;
    cfg.fiber.beta2_ps2_per_m * (offset * offset + offset * (nu_s + nu_i) + nu_s * nu_i)
}

/// Factors of Φ that depend on z alone: the Δ-dependent damping, the quartic
/// root, the arctan phase, the cubic phase and `exp(iβ₂Δ²z/4)`.
pub fn dispersion_envelope(z: f64, cfg: &ExperimentConfig) -> Complex64 {
    let beta2 = cfg.fiber.beta2_ps2_per_m;
    let delta = cfg.delta_rad_per_ps;
    let s2 = cfg.sigma_p_rad_per_ps * cfg.sigma_p_rad_per_ps;
    let bz = beta2 * z;
    let chirp = bz * s2;
    let denom = 1.0 + chirp * chirp;
    let damping = (-bz * bz * delta * delta * s2 / (4.0 * denom)).exp() / denom.powf(0.25);
    let phase = 0.5 * chirp.atan() - bz * chirp * chirp * delta * delta / (4.0 * denom)
        + bz * delta * delta / 4.0;
    Complex64::from_polar(damping, phase)
}

/// z-dependent weight G(z): the dispersion envelope times the self-phase
/// modulation phase `exp(-2iγP z)`.
pub fn g_factor(z: f64, cfg: &ExperimentConfig) -> Complex64 {
    let spm = -2.0 * cfg.fiber.gamma_per_w_m * cfg.pumps.peak_power_w * z;
    dispersion_envelope(z, cfg) * Complex64::from_polar(1.0, spm)
}

/// Closed form of the pump convolution Φ(νs, νi, z).
pub fn phi_closed(nu_s: f64, nu_i: f64, z: f64, cfg: &ExperimentConfig) -> Complex64 {
    let sigma_p = cfg.sigma_p_rad_per_ps;
    let sum = nu_s + nu_i;
    let diff = nu_s - nu_i;
    let pump = PI.sqrt() * sigma_p * (-sum * sum / (4.0 * sigma_p * sigma_p)).exp();
    let detuning_phase = -cfg.fiber.beta2_ps2_per_m * z * diff * diff / 4.0;
    dispersion_envelope(z, cfg) * Complex64::from_polar(pump, detuning_phase)
}

/// Φ by direct quadrature over the pump detuning, with unit pump amplitude.
pub fn phi_oracle(
    nu_s: f64,
    nu_i: f64,
    z: f64,
    cfg: &ExperimentConfig,
    settings: &QuadratureSettings,
) -> Result<Complex64, JsaError> {
    phi_oracle_scaled(nu_s, nu_i, z, cfg, 1.0, settings)
}

/// As [`phi_oracle`] for pump envelopes of peak amplitude `pump_amplitude`.
pub fn phi_oracle_scaled(
    nu_s: f64,
    nu_i: f64,
    z: f64,
    cfg: &ExperimentConfig,
    pump_amplitude: f64,
    settings: &QuadratureSettings,
) -> Result<Complex64, JsaError> {
    let sigma_p = cfg.sigma_p_rad_per_ps;
    let sum = nu_s + nu_i;
    let integrand = |nu_p: f64| {
        let other = sum - nu_p;
        let envelope = -(nu_p * nu_p + other * other) / (2.0 * sigma_p * sigma_p);
        Complex64::from_polar(envelope.exp(), delta_k(nu_p, nu_s, nu_i, cfg) * z)
    };
    // The product of the two pump envelopes peaks at ν_p = (νs+νi)/2.
    let centre = 0.5 * sum;
    let reach = settings.truncation_sigmas * sigma_p;
    let estimate = integrate_1d(integrand, centre - reach, centre + reach, settings)?;
    Ok(estimate.value * (pump_amplitude * pump_amplitude))
}

/// Joint spectral amplitude Q(νs, νi) = ∫_{-L}^{0} Φ(νs, νi, z) e^{-2iγPz} dz.
pub fn q_amplitude(
    nu_s: f64,
    nu_i: f64,
    cfg: &ExperimentConfig,
    settings: &QuadratureSettings,
) -> Result<Complex64, JsaError> {
    let spm_rate = -2.0 * cfg.fiber.gamma_per_w_m * cfg.pumps.peak_power_w;
    let estimate = integrate_1d(
        |z| phi_closed(nu_s, nu_i, z, cfg) * Complex64::from_polar(1.0, spm_rate * z),
        -cfg.fiber.length_m,
        0.0,
        settings,
    )?;
    Ok(estimate.value)
}

/// Q sampled on a uniform (νs, νi) grid and scaled to max |Q| = 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeGrid {
    pub nu_s_axis: Vec<f64>,
    pub nu_i_axis: Vec<f64>,
    /// Row-major: `values[s * nu_i_axis.len() + i]`.
    pub values: Vec<Complex64>,
    /// max |Q| before scaling.
    pub normalization: f64,
}

impl AmplitudeGrid {
    pub fn get(&self, s: usize, i: usize) -> Complex64 {
        self.values[s * self.nu_i_axis.len() + i]
    }

    /// Grid indices of the largest |Q|²; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let n = self.nu_i_axis.len();
        let mut best = (0, f64::NEG_INFINITY);
        for (k, v) in self.values.iter().enumerate() {
            if v.norm_sqr() > best.1 {
                best = (k, v.norm_sqr());
            }
        }
        (best.0 / n, best.0 % n)
    }

    /// CSV with header `nu_s,nu_i,re_q,im_q,abs2_q`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "nu_s,nu_i,re_q,im_q,abs2_q")?;
        for (s, &nu_s) in self.nu_s_axis.iter().enumerate() {
            for (i, &nu_i) in self.nu_i_axis.iter().enumerate() {
                let q = self.get(s, i);
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_num(nu_s),
                    fmt_num(nu_i),
                    fmt_num(q.re),
                    fmt_num(q.im),
                    fmt_num(q.norm_sqr())
                )?;
            }
        }
        Ok(())
    }
}

/// Uniform axis of `n` points over `[-half_width, half_width]`.
pub fn symmetric_axis(n: usize, half_width: f64) -> Vec<f64> {
    let step = 2.0 * half_width / (n - 1) as f64;
    (0..n)
        .map(|k| {
            // mirror so the axis is exactly antisymmetric
            let j = k.min(n - 1 - k);
            let x = -half_width + step * j as f64;
            if k == j {
                x
            } else {
                -x
            }
        })
        .collect()
}

/// Samples Q on an `n_points`² grid spanning ±`span`·σ₀ on both axes.
pub fn jsa_grid(
    cfg: &ExperimentConfig,
    n_points: usize,
    span: f64,
    settings: &QuadratureSettings,
) -> Result<AmplitudeGrid, JsaError> {
    if n_points < 2 {
        return Err(JsaError::InvalidGrid(format!(
            "need at least 2 points per axis, got {n_points}"
        )));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(JsaError::InvalidGrid(format!(
            "span must be positive, got {span}"
        )));
    }
    let axis = symmetric_axis(n_points, span * cfg.sigma_0_rad_per_ps());
    let rows: Vec<Vec<Complex64>> = axis
        .par_iter()
        .map(|&nu_s| {
            axis.iter()
                .map(|&nu_i| q_amplitude(nu_s, nu_i, cfg, settings))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut values: Vec<Complex64> = rows.into_iter().flatten().collect();
    let normalization = values.iter().map(|q| q.norm()).fold(0.0, f64::max);
    if normalization > 0.0 {
        for q in &mut values {
            *q /= normalization;
        }
    }
    Ok(AmplitudeGrid {
        nu_s_axis: axis.clone(),
        nu_i_axis: axis,
        values,
        normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{build_config, LabConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> ExperimentConfig {
        build_config(&LabConfig::reference()).unwrap()
    }

    fn tight() -> QuadratureSettings {
        QuadratureSettings::with_tolerances(1e-12, 1e-300)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn delta_k_vanishes_at_centre() {
        let cfg = reference();
        assert_eq!(delta_k(cfg.delta_rad_per_ps / 2.0, 0.0, 0.0, &cfg), 0.0);
    }

    #[test]
    fn delta_k_symmetric() {
        let cfg = reference();
        for &(p, s, i) in &[(0.1, 0.3, -0.2), (-0.4, 1.0, 0.05), (0.0, -0.7, 0.7)] {
            assert_eq!(delta_k(p, s, i, &cfg), delta_k(p, i, s, &cfg));
        }
    }

    #[test]
    fn delta_k_reference_value() {
        let cfg = reference();
        let d = cfg.delta_rad_per_ps;
        let expected = -1.16e-4 * d * d / 4.0;
        let got = delta_k(0.0, 0.0, 0.0, &cfg);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - -1.77e-3).abs() < 2e-5, "{got}");
    }

    #[test]
    fn phi_closed_at_fiber_end() {
        let cfg = reference();
        let sp = cfg.sigma_p_rad_per_ps;
        for &(s, i) in &[(0.0, 0.0), (0.2, -0.1), (0.5, 0.3)] {
            let expected = PI.sqrt() * sp * (-(s + i) * (s + i) / (4.0 * sp * sp)).exp();
            let phi = phi_closed(s, i, 0.0, &cfg);
            assert!((phi - Complex64::new(expected, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn phi_closed_exchange_symmetric() {
        let cfg = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s = rng.random_range(-2.0..2.0);
            let i = rng.random_range(-2.0..2.0);
            let z = rng.random_range(-300.0..0.0);
            assert_eq!(phi_closed(s, i, z, &cfg), phi_closed(i, s, z, &cfg));
        }
    }

    #[test]
    fn phi_closed_matches_oracle() {
        let cfg = reference();
        for &(s, i, z) in &[(0.2, -0.1, -150.0), (0.0, 0.0, -150.0), (0.2, -0.1, 0.0)] {
            let closed = phi_closed(s, i, z, &cfg);
            let oracle = phi_oracle(s, i, z, &cfg, &tight()).unwrap();
            assert!(
                rel(closed, oracle) < 1e-8,
                "{s} {i} {z}: {closed} vs {oracle}"
            );
        }
    }

    #[test]
    fn oracle_at_zero_detuning() {
        let cfg = reference();
        let phi = phi_oracle(0.0, 0.0, 0.0, &cfg, &tight()).unwrap();
        let expected = PI.sqrt() * cfg.sigma_p_rad_per_ps;
        assert!((phi.re - expected).abs() < 1e-10 * expected && phi.im.abs() < 1e-12);
    }

    #[test]
    fn oracle_scales_with_pump_power() {
        let cfg = reference();
        let one = phi_oracle_scaled(0.1, 0.2, -100.0, &cfg, 1.0, &tight()).unwrap();
        let two = phi_oracle_scaled(0.1, 0.2, -100.0, &cfg, 2f64.sqrt(), &tight()).unwrap();
        assert!(rel(two, one * 2.0) < 1e-12);
    }

    #[test]
    fn envelope_modulus_independent_of_gamma() {
        let cfg = reference();
        let mut lab = LabConfig::reference();
        lab.gamma_per_w_m = 0.05;
        let other = build_config(&lab).unwrap();
        for k in 0..=10 {
            let z = -30.0 * k as f64;
            let a =
                phi_closed(0.3, -0.1, z, &cfg) * g_factor(z, &cfg) / dispersion_envelope(z, &cfg);
            let b = phi_closed(0.3, -0.1, z, &other) * g_factor(z, &other)
                / dispersion_envelope(z, &other);
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn q_without_dispersion_or_spm() {
        let mut lab = LabConfig::reference();
        lab.beta2_ps2_per_km = 0.0;
        lab.gamma_per_w_m = 0.0;
        let cfg = build_config(&lab).unwrap();
        let sp = cfg.sigma_p_rad_per_ps;
        for &(s, i) in &[(0.0, 0.0), (0.3, -0.5), (0.4, 0.4)] {
            let q = q_amplitude(s, i, &cfg, &tight()).unwrap();
            let expected = 300.0 * PI.sqrt() * sp * (-(s + i) * (s + i) / (4.0 * sp * sp)).exp();
            assert!(rel(q, Complex64::new(expected, 0.0)) < 1e-12);
        }
    }

    #[test]
    fn q_exchange_symmetric() {
        let cfg = reference();
        let settings = QuadratureSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = rng.random_range(-1.5..1.5);
            let i = rng.random_range(-1.5..1.5);
            let a = q_amplitude(s, i, &cfg, &settings).unwrap();
            let b = q_amplitude(i, s, &cfg, &settings).unwrap();
            assert!(rel(a, b) < 1e-12);
        }
    }

    #[test]
    fn dephasing_reduces_modulus() {
        let cfg = reference();
        let q = q_amplitude(0.0, 0.0, &cfg, &tight()).unwrap();
        let bound = 300.0 * PI.sqrt() * cfg.sigma_p_rad_per_ps;
        assert!(q.norm() < bound);
    }

    #[test]
    fn grid_shape_and_symmetry() {
        let cfg = reference();
        let grid = jsa_grid(&cfg, 17, 3.0, &QuadratureSettings::default()).unwrap();
        assert_eq!(grid.values.len(), 17 * 17);
        let max = grid.values.iter().map(|q| q.norm()).fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-15);
        for s in 0..17 {
            for i in 0..17 {
                assert!((grid.get(s, i) - grid.get(i, s)).norm() < 1e-12);
            }
        }
        assert_eq!(grid.nu_s_axis[8], 0.0);
        assert_eq!(grid.nu_s_axis[0], -grid.nu_s_axis[16]);
    }

    #[test]
    fn grid_peak_lies_on_zero_sum_line() {
        let cfg = reference();
        let grid = jsa_grid(&cfg, 21, 3.0, &QuadratureSettings::default()).unwrap();
        let (s, i) = grid.argmax();
        assert_eq!(s + i, 20, "argmax at ({s}, {i})");
    }

    #[test]
    fn grid_rejects_degenerate_sizes() {
        let cfg = reference();
        assert!(jsa_grid(&cfg, 1, 3.0, &QuadratureSettings::default()).is_err());
        assert!(jsa_grid(&cfg, 5, 0.0, &QuadratureSettings::default()).is_err());
    }

    #[test]
    fn csv_layout() {
        let cfg = reference();
        let grid = jsa_grid(&cfg, 3, 2.0, &QuadratureSettings::default()).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "nu_s,nu_i,re_q,im_q,abs2_q");
        assert_eq!(lines.len(), 10);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
    }
}
