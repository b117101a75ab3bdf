use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{clamp_rate, normalize, require_equal, Engine, HomError, HomSettings, RateModel};
use crate::jsa::g_factor;
use crate::quadrature::{AxisRule, GaussLegendre};
use crate::units::{ExperimentConfig, Transmission};

/// The 4-D coincidence integrand for super-Gaussian filters at `delay_ps`,
/// as a function of `[z₁, z₂, νs, νi]`.
///
/// The filter enters through |f(ν)|² = exp(−2ν⁴/σ₀⁴), σ₀ being the width of
/// the amplitude profile `exp(−ν⁴/σ₀⁴)`.
pub fn supergaussian_integrand(
    cfg: &ExperimentConfig,
    delay_ps: f64,
) -> Result<impl Fn([f64; 4]) -> Complex64 + Sync + '_, HomError> {
    let filter = super_gaussian_filter(cfg)?;
    let sp = cfg.sigma_p_rad_per_ps;
    let prefactor = prefactor(cfg);
    let beta2 = cfg.fiber.beta2_ps2_per_m;
    Ok(move |p: [f64; 4]| {
        let [z1, z2, s, i] = p;
        let sum = s + i;
        let diff = s - i;
        let spectral = prefactor
            * (-sum * sum / (2.0 * sp * sp)).exp()
            * (filter.amplitude(s) * filter.amplitude(i)).powi(2);
        let dispersion = Complex64::from_polar(spectral, -beta2 / 4.0 * diff * diff * (z1 - z2));
        let bracket = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -(i - s) * delay_ps);
        g_factor(z1, cfg) * g_factor(z2, cfg).conj() * dispersion * bracket
    })
}

fn prefactor(cfg: &ExperimentConfig) -> f64 {
    let p = cfg.pumps.peak_power_w;
    PI * p * p / (cfg.sigma_p_rad_per_ps * cfg.sigma_p_rad_per_ps)
}

fn super_gaussian_filter(cfg: &ExperimentConfig) -> Result<Transmission, HomError> {
    match require_equal(Engine::SuperGaussian, cfg)? {
        t @ Transmission::SuperGaussian4 { .. } => Ok(t),
        other => Err(HomError::UnsupportedFilter {
            engine: Engine::SuperGaussian,
            reason: format!("needs super-Gaussian filters, got {other:?}"),
        }),
    }
}

/// Tensor Gauss–Legendre evaluation of the super-Gaussian coincidence rate.
///
/// The z₁/z₂ sums factor: for fixed (νs, νi) the inner double sum of the
/// tensor rule equals |Σ_z w G(z) e^{−iβ₂(νs−νi)²z/4}|², so each frequency
/// node pair carries one real weight and every delay costs a single pass
/// over the frequency nodes. The result is the same tensor-product sum as
/// applying the rule to the 4-D integrand directly.
#[derive(Debug, Clone)]
pub struct SuperGaussianEngine {
    weights: Vec<f64>,
    diffs: Vec<f64>,
    baseline: f64,
    max_delay_ps: f64,
    pub freq_nodes_per_axis: usize,
    pub z_order: usize,
}

impl SuperGaussianEngine {
    /// Chooses panel counts and orders so the integrand phase changes by at
    /// most `phase_per_point` radians per node for every `|δτ| ≤ max_delay_ps`.
    pub fn new(
        cfg: &ExperimentConfig,
        settings: &HomSettings,
        max_delay_ps: f64,
    ) -> Result<Self, HomError> {
        settings.quadrature.validate()?;
        let filter = super_gaussian_filter(cfg)?;
        let half_width =
            settings.quadrature.truncation_sigmas * cfg.sigma_p_rad_per_ps.max(filter.width());
        let order = settings.tensor_order.max(2);
        let budget = settings.phase_per_point * order as f64;

        let beta2 = cfg.fiber.beta2_ps2_per_m.abs();
        let length = cfg.fiber.length_m;
        let delta = cfg.delta_rad_per_ps;
        let sp2 = cfg.sigma_p_rad_per_ps.powi(2);
        let chirp = beta2 * length * sp2;
        let span = 2.0 * half_width;
        let z_swing = beta2 * delta * delta * length / 4.0
            + 2.0 * cfg.fiber.gamma_per_w_m * cfg.pumps.peak_power_w * length
            + beta2 * length * span * span / 4.0
            + 0.5 * chirp.atan()
            + beta2 * length * chirp * chirp * delta * delta / (4.0 * (1.0 + chirp * chirp));
        let mut z_order = order;
        while z_swing > settings.phase_per_point * z_order as f64 {
            z_order *= 2;
            if z_order > settings.max_tensor_order {
                return Err(HomError::OrderInsufficient {
                    required: z_order,
                    cap: settings.max_tensor_order,
                });
            }
        }
        let freq_swing = span * max_delay_ps.abs() + beta2 * length * span * span / 2.0;
        let panels = ((freq_swing / budget).ceil() as usize).max(1);
        Self::with_grid(cfg, order, panels, z_order, half_width, max_delay_ps)
    }

    /// Explicit grid: `freq_order` × `freq_panels` nodes on each frequency axis
    /// over ±`half_width`, `z_order` nodes on each fiber axis.
    pub fn with_grid(
        cfg: &ExperimentConfig,
        freq_order: usize,
        freq_panels: usize,
        z_order: usize,
        half_width: f64,
        max_delay_ps: f64,
    ) -> Result<Self, HomError> {
        let filter = super_gaussian_filter(cfg)?;
        let length = cfg.fiber.length_m;
        let beta2 = cfg.fiber.beta2_ps2_per_m;
        let sp = cfg.sigma_p_rad_per_ps;
        let prefactor = prefactor(cfg);

        let z_rule = AxisRule::composite(-length, 0.0, z_order, 1);
        let g: Vec<Complex64> = z_rule
            .nodes
            .iter()
            .zip(&z_rule.weights)
            .map(|(&z, &w)| g_factor(z, cfg) * w)
            .collect();
        let freq = AxisRule::from_base(
            &GaussLegendre::new(freq_order),
            -half_width,
            half_width,
            freq_panels,
        );
        let n = freq.len();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let s = freq.nodes[j];
                let mut weights = Vec::with_capacity(n);
                let mut diffs = Vec::with_capacity(n);
                for k in 0..n {
                    let i = freq.nodes[k];
                    let sum = s + i;
                    let diff = s - i;
                    let rate = -beta2 / 4.0 * diff * diff;
                    let h: Complex64 = g
                        .iter()
                        .zip(&z_rule.nodes)
                        .map(|(gz, &z)| gz * Complex64::from_polar(1.0, rate * z))
                        .sum();
                    let spectral = (-sum * sum / (2.0 * sp * sp)).exp()
                        * (filter.amplitude(s) * filter.amplitude(i)).powi(2);
                    weights.push(
                        prefactor * freq.weights[j] * freq.weights[k] * spectral * h.norm_sqr(),
                    );
                    diffs.push(i - s);
                }
                (weights, diffs)
            })
            .collect();
        let (weights, diffs): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        let weights: Vec<f64> = weights.into_iter().flatten().collect();
        let diffs: Vec<f64> = diffs.into_iter().flatten().collect();
        let baseline = weights.iter().sum();
        Ok(SuperGaussianEngine {
            weights,
            diffs,
            baseline,
            max_delay_ps: max_delay_ps.abs(),
            freq_nodes_per_axis: n,
            z_order,
        })
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    /// Unnormalized tensor sum of the 4-D integrand at `delay_ps`.
    pub fn raw_rate(&self, delay_ps: f64) -> Result<Complex64, HomError> {
        if delay_ps.abs() > self.max_delay_ps * (1.0 + 1e-12) {
            return Err(HomError::DelayOutOfRange {
                delay_ps,
                max_ps: self.max_delay_ps,
            });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, v) in self.weights.iter().zip(&self.diffs) {
            let (sin, cos) = (v * delay_ps).sin_cos();
            acc += Complex64::new(w * (1.0 - cos), w * sin);
        }
        Ok(acc)
    }
}

impl RateModel for SuperGaussianEngine {
    fn engine(&self) -> Engine {
        Engine::SuperGaussian
    }

    fn rate(&self, delay_ps: f64) -> Result<f64, HomError> {
        let raw = self.raw_rate(delay_ps)?;
        let tolerance = 1e-10 * self.baseline;
        if raw.im.abs() > tolerance {
            return Err(HomError::ImaginaryResidue {
                imag: raw.im,
                tolerance,
            });
        }
        clamp_rate(delay_ps, normalize(raw.re, self.baseline)?, 1e-9)
    }
}

/// Normalized super-Gaussian rate at a single delay.
pub fn rate_supergaussian(
    delay_ps: f64,
    cfg: &ExperimentConfig,
    settings: &HomSettings,
) -> Result<f64, HomError> {
    SuperGaussianEngine::new(cfg, settings, delay_ps.abs().max(1.0))?.rate(delay_ps)
}
