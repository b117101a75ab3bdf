use std::cell::RefCell;

use num_complex::Complex64;

use super::{clamp_rate, normalize, require_equal, Engine, HomError, RateModel};
use crate::jsa::{q_amplitude, JsaError};
use crate::quadrature::{integrate_2d, QuadratureSettings};
use crate::units::{ExperimentConfig, Transmission};

/// Coincidence rate from direct quadrature over the signal/idler detunings.
///
/// With filter amplitudes `f_s`, `f_i` the filtered joint amplitude is
/// F(νs, νi) = Q(νs, νi)·f_s(νs)·f_i(νi) and
///
/// R(δτ) ∝ ∫∫ |F(νs,νi)|² − F(νs,νi)·F*(νi,νs)·e^{−i(νi−νs)δτ}.
///
/// For identical filters F is exchange symmetric and the bracket reduces to
/// |F|²·[1 − e^{−i(νi−νs)δτ}].
pub struct SpectralEngine<'a> {
    cfg: &'a ExperimentConfig,
    signal: Transmission,
    idler: Transmission,
    engine: Engine,
    settings: QuadratureSettings,
    half_width: f64,
    baseline: f64,
}

impl<'a> SpectralEngine<'a> {
    /// Identical filters in both arms (the signal-arm filter of `cfg`).
    pub fn symmetric(
        cfg: &'a ExperimentConfig,
        settings: &QuadratureSettings,
    ) -> Result<Self, HomError> {
        let filter = require_equal(Engine::GeneralSpectral, cfg)?;
        Self::build(cfg, filter, filter, Engine::GeneralSpectral, settings)
    }

    pub fn asymmetric(
        cfg: &'a ExperimentConfig,
        signal: Transmission,
        idler: Transmission,
        settings: &QuadratureSettings,
    ) -> Result<Self, HomError> {
        Self::build(cfg, signal, idler, Engine::Asymmetric, settings)
    }

    fn build(
        cfg: &'a ExperimentConfig,
        signal: Transmission,
        idler: Transmission,
        engine: Engine,
        settings: &QuadratureSettings,
    ) -> Result<Self, HomError> {
        settings.validate()?;
        let widest = cfg
            .sigma_p_rad_per_ps
            .max(signal.width())
            .max(idler.width());
        let mut engine = SpectralEngine {
            cfg,
            signal,
            idler,
            engine,
            settings: *settings,
            half_width: settings.truncation_sigmas * widest,
            baseline: 0.0,
        };
        let failure = RefCell::new(None);
        let estimate = integrate_2d(
            |s, i| match engine.amplitudes(s, i) {
                Ok((direct, _)) => Complex64::new(direct.norm_sqr(), 0.0),
                Err(e) => stash(&failure, e),
            },
            (-engine.half_width, engine.half_width),
            (-engine.half_width, engine.half_width),
            settings,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e.into());
        }
        engine.baseline = estimate?.value.re;
        Ok(engine)
    }

    /// F(νs, νi) and F(νi, νs).
    ///
    /// Q is exchange symmetric, so one evaluation serves both orderings.
    pub fn amplitudes(&self, nu_s: f64, nu_i: f64) -> Result<(Complex64, Complex64), JsaError> {
        let q = q_amplitude(nu_s, nu_i, self.cfg, &self.settings)?;
        let direct = q * (self.signal.amplitude(nu_s) * self.idler.amplitude(nu_i));
        let swapped = q * (self.signal.amplitude(nu_i) * self.idler.amplitude(nu_s));
        Ok((direct, swapped))
    }

    /// ∫∫|F|², the δτ → ∞ limit used for normalization.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Unnormalized integral of the coincidence bracket at `delay_ps`.
    pub fn raw_rate(&self, delay_ps: f64) -> Result<Complex64, HomError> {
        let mut settings = self.settings;
        settings.abs_tol = settings.abs_tol.max(settings.rel_tol * self.baseline);
        let failure = RefCell::new(None);
        let estimate = integrate_2d(
            |s, i| match self.amplitudes(s, i) {
                Ok((direct, swapped)) => {
                    let phase = Complex64::from_polar(1.0, -(i - s) * delay_ps);
                    Complex64::new(direct.norm_sqr(), 0.0) - direct * swapped.conj() * phase
                }
                Err(e) => stash(&failure, e),
            },
            (-self.half_width, self.half_width),
            (-self.half_width, self.half_width),
            &settings,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e.into());
        }
        let estimate = estimate?;
        let tolerance = estimate.error + 10.0 * settings.abs_tol;
        if estimate.value.im.abs() > tolerance {
            return Err(HomError::ImaginaryResidue {
                imag: estimate.value.im,
                tolerance,
            });
        }
        Ok(estimate.value)
    }
}

fn stash(slot: &RefCell<Option<JsaError>>, e: JsaError) -> Complex64 {
    slot.borrow_mut().get_or_insert(e);
    Complex64::new(f64::NAN, f64::NAN)
}

impl RateModel for SpectralEngine<'_> {
    fn engine(&self) -> Engine {
        self.engine
    }

    fn rate(&self, delay_ps: f64) -> Result<f64, HomError> {
        let raw = self.raw_rate(delay_ps)?;
        clamp_rate(
            delay_ps,
            normalize(raw.re, self.baseline)?,
            10.0 * self.settings.rel_tol,
        )
    }
}

/// Normalized rate with identical filters in both arms.
pub fn rate_general(
    delay_ps: f64,
    cfg: &ExperimentConfig,
    settings: &QuadratureSettings,
) -> Result<f64, HomError> {
    SpectralEngine::symmetric(cfg, settings)?.rate(delay_ps)
}

/// Normalized rate with possibly different signal and idler filters.
pub fn rate_asymmetric(
    delay_ps: f64,
    cfg: &ExperimentConfig,
    signal: Transmission,
    idler: Transmission,
    settings: &QuadratureSettings,
) -> Result<f64, HomError> {
    SpectralEngine::asymmetric(cfg, signal, idler, settings)?.rate(delay_ps)
}
