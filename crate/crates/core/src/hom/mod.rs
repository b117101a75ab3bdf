//! Normalized Hong-Ou-Mandel coincidence rate R_c(δτ) and dip metrics.
//!
//! Four engines compute the same physical quantity:
//!
//! * [`Engine::GeneralSpectral`]: 2-D quadrature over signal/idler detunings
//!   of |F|²·[1 − e^{−i(νi−νs)δτ}], with F the filtered joint amplitude.
//! * [`Engine::Asymmetric`]: the same with different filters in the two arms,
//!   where the interference term becomes F(νs,νi)F*(νi,νs).
//! * [`Engine::GaussianClosed`]: Gaussian filters with the frequency
//!   integrals done analytically, leaving a 2-D integral over (z₁, z₂).
//! * [`Engine::SuperGaussian`]: fourth-order super-Gaussian filters, 4-D
//!   tensor Gauss–Legendre over (z₁, z₂, νs, νi).
//!
//! Every engine normalizes to its δτ → ∞ limit, so the baseline is one.

mod closed;
mod metrics;
mod spectral;
mod supergaussian;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::fmt_num;
use crate::jsa::JsaError;
use crate::quadrature::{QuadratureError, QuadratureSettings, DEFAULT_TENSOR_ORDER};
use crate::units::{ExperimentConfig, Transmission};

pub use closed::{rate_gaussian_closed, GaussianClosedEngine};
pub use metrics::{dip_metrics, DipMetrics, MetricsError, MetricsReport};
pub use spectral::{rate_asymmetric, rate_general, SpectralEngine};
pub use supergaussian::{rate_supergaussian, supergaussian_integrand, SuperGaussianEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    GeneralSpectral,
    GaussianClosed,
    SuperGaussian,
    Asymmetric,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::GeneralSpectral => "general_spectral",
            Engine::GaussianClosed => "gaussian_closed",
            Engine::SuperGaussian => "super_gaussian",
            Engine::Asymmetric => "asymmetric",
        })
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "general" | "general_spectral" => Ok(Engine::GeneralSpectral),
            "gaussian" | "gaussian_closed" => Ok(Engine::GaussianClosed),
            "supergaussian" | "super_gaussian" => Ok(Engine::SuperGaussian),
            "asymmetric" => Ok(Engine::Asymmetric),
            other => Err(format!("unknown engine '{other}'")),
        }
    }
}

#[derive(Debug, Error)]
pub enum HomError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Jsa(#[from] JsaError),
    #[error("engine {engine} cannot use these filters: {reason}")]
    UnsupportedFilter { engine: Engine, reason: String },
    #[error("imaginary part {imag:e} of the coincidence integral exceeds tolerance {tolerance:e}")]
    ImaginaryResidue { imag: f64, tolerance: f64 },
    #[error("rate {rate:e} at delay {delay_ps} ps is negative beyond tolerance")]
    NegativeRate { delay_ps: f64, rate: f64 },
    #[error("tensor order {required} needed to resolve the integrand exceeds the cap {cap}")]
    OrderInsufficient { required: usize, cap: usize },
    #[error("delay {delay_ps} ps outside the prepared range ±{max_ps} ps")]
    DelayOutOfRange { delay_ps: f64, max_ps: f64 },
    #[error("invalid delay grid: {0}")]
    InvalidDelays(String),
    #[error("the delay-independent normalization integral vanishes")]
    ZeroBaseline,
}

/// Knobs shared by the engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomSettings {
    pub quadrature: QuadratureSettings,
    /// Gauss–Legendre points per panel for the super-Gaussian tensor rule.
    pub tensor_order: usize,
    /// Upper limit when the z-axis order has to be raised.
    pub max_tensor_order: usize,
    /// Largest accepted phase swing (rad) of the integrand across one panel,
    /// as a fraction of the panel order.
    pub phase_per_point: f64,
}

impl Default for HomSettings {
    fn default() -> Self {
        HomSettings {
            quadrature: QuadratureSettings::default(),
            tensor_order: DEFAULT_TENSOR_ORDER,
            max_tensor_order: 1024,
            phase_per_point: 0.5,
        }
    }
}

/// Anything that yields a normalized coincidence rate at a given delay.
pub trait RateModel: Sync {
    fn engine(&self) -> Engine;
    fn rate(&self, delay_ps: f64) -> Result<f64, HomError>;
}

/// Builds the engine-specific model. `max_delay_ps` sizes the super-Gaussian
/// frequency grid; the other engines ignore it.
pub fn build_model<'a>(
    engine: Engine,
    cfg: &'a ExperimentConfig,
    settings: &HomSettings,
    max_delay_ps: f64,
) -> Result<Box<dyn RateModel + 'a>, HomError> {
    Ok(match engine {
        Engine::GeneralSpectral => Box::new(SpectralEngine::symmetric(cfg, &settings.quadrature)?),
        Engine::Asymmetric => Box::new(SpectralEngine::asymmetric(
            cfg,
            cfg.signal_filter,
            cfg.idler_filter,
            &settings.quadrature,
        )?),
        Engine::GaussianClosed => Box::new(GaussianClosedEngine::new(cfg, &settings.quadrature)?),
        Engine::SuperGaussian => Box::new(SuperGaussianEngine::new(cfg, settings, max_delay_ps)?),
    })
}

/// Sampled, normalized coincidence curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipCurve {
    pub delays_ps: Vec<f64>,
    pub rates: Vec<f64>,
    pub engine: Engine,
}

impl DipCurve {
    pub fn new(delays_ps: Vec<f64>, rates: Vec<f64>, engine: Engine) -> Result<Self, HomError> {
        check_delays(&delays_ps)?;
        if rates.len() != delays_ps.len() {
            return Err(HomError::InvalidDelays(format!(
                "{} delays but {} rates",
                delays_ps.len(),
                rates.len()
            )));
        }
        Ok(DipCurve {
            delays_ps,
            rates,
            engine,
        })
    }

    /// CSV with header `delay_ps,rate_normalized`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "delay_ps,rate_normalized")?;
        for (d, r) in self.delays_ps.iter().zip(&self.rates) {
            writeln!(out, "{},{}", fmt_num(*d), fmt_num(*r))?;
        }
        Ok(())
    }
}

fn check_delays(delays: &[f64]) -> Result<(), HomError> {
    if delays.is_empty() {
        return Err(HomError::InvalidDelays("no delays".into()));
    }
    if delays.iter().any(|d| !d.is_finite()) {
        return Err(HomError::InvalidDelays("non-finite delay".into()));
    }
    if delays.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(HomError::InvalidDelays(
            "delays must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Uniform delays `start, start + step, …` up to and including `stop`.
pub fn delay_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, HomError> {
    if !(step > 0.0) || !(stop > start) || !start.is_finite() || !stop.is_finite() {
        return Err(HomError::InvalidDelays(format!(
            "need start < stop and step > 0 (got {start}, {stop}, {step})"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| {
            let d = start + step * k as f64;
            // snap values within rounding of zero so the grid hits δτ = 0 exactly
            if d.abs() < 1e-9 * step {
                0.0
            } else {
                d
            }
        })
        .collect())
}

/// Evaluates `model` at every delay; parallel over delays, deterministic.
pub fn sample_curve(model: &dyn RateModel, delays_ps: &[f64]) -> Result<DipCurve, HomError> {
    check_delays(delays_ps)?;
    let rates = delays_ps
        .par_iter()
        .map(|&d| model.rate(d))
        .collect::<Result<Vec<_>, _>>()?;
    DipCurve::new(delays_ps.to_vec(), rates, model.engine())
}

/// Builds the model for `engine` and samples it on `delays_ps`.
pub fn compute_curve(
    engine: Engine,
    cfg: &ExperimentConfig,
    settings: &HomSettings,
    delays_ps: &[f64],
) -> Result<DipCurve, HomError> {
    check_delays(delays_ps)?;
    let reach = delays_ps.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let model = build_model(engine, cfg, settings, reach)?;
    sample_curve(model.as_ref(), delays_ps)
}

fn normalize(raw: f64, baseline: f64) -> Result<f64, HomError> {
    if baseline > 0.0 && baseline.is_finite() {
        Ok(raw / baseline)
    } else {
        Err(HomError::ZeroBaseline)
    }
}

// Negative rates within `tolerance` are rounding noise and clamp to zero.
fn clamp_rate(delay_ps: f64, rate: f64, tolerance: f64) -> Result<f64, HomError> {
    if rate < -tolerance {
        Err(HomError::NegativeRate { delay_ps, rate })
    } else {
        Ok(rate.max(0.0))
    }
}

fn require_equal(engine: Engine, cfg: &ExperimentConfig) -> Result<Transmission, HomError> {
    if cfg.signal_filter != cfg.idler_filter {
        return Err(HomError::UnsupportedFilter {
            engine,
            reason: "signal and idler filters differ".into(),
        });
    }
    Ok(cfg.signal_filter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_names_round_trip() {
        for e in [
            Engine::GeneralSpectral,
            Engine::GaussianClosed,
            Engine::SuperGaussian,
            Engine::Asymmetric,
        ] {
            assert_eq!(e.to_string().parse::<Engine>().unwrap(), e);
        }
        assert_eq!(
            "gaussian".parse::<Engine>().unwrap(),
            Engine::GaussianClosed
        );
        assert!("bogus".parse::<Engine>().is_err());
    }

    #[test]
    fn delay_grid_hits_zero() {
        let g = delay_grid(-15.0, 15.0, 0.1).unwrap();
        assert_eq!(g.len(), 301);
        assert_eq!(g[150], 0.0);
        assert!((g[300] - 15.0).abs() < 1e-12);
        assert!(delay_grid(1.0, 0.0, 0.1).is_err());
        assert!(delay_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn curve_requires_increasing_delays() {
        assert!(DipCurve::new(vec![0.0, 0.0], vec![1.0, 1.0], Engine::GaussianClosed).is_err());
        assert!(DipCurve::new(vec![0.0, 1.0], vec![1.0], Engine::GaussianClosed).is_err());
    }

    #[test]
    fn curve_csv() {
        let c = DipCurve::new(
            vec![-1.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0],
            Engine::GaussianClosed,
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("delay_ps,rate_normalized\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn clamp() {
        assert_eq!(clamp_rate(0.0, -1e-12, 1e-9).unwrap(), 0.0);
        assert!(clamp_rate(0.0, -1e-3, 1e-9).is_err());
        assert_eq!(clamp_rate(0.0, 0.5, 1e-9).unwrap(), 0.5);
    }
}
