use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

use super::{clamp_rate, normalize, require_equal, Engine, HomError, RateModel};
use crate::jsa::g_factor;
use crate::quadrature::{integrate_2d, QuadratureSettings};
use crate::units::{ExperimentConfig, Transmission};

/// Gaussian-filter rate with the frequency integrals done in closed form:
/// R(δτ) ∝ ∫∫ G(z₁) G*(z₂) I(z₁, z₂; δτ) over [−L, 0]².
pub struct GaussianClosedEngine<'a> {
    cfg: &'a ExperimentConfig,
    sigma_0: f64,
    settings: QuadratureSettings,
    baseline: f64,
}

impl<'a> GaussianClosedEngine<'a> {
    pub fn new(cfg: &'a ExperimentConfig, settings: &QuadratureSettings) -> Result<Self, HomError> {
        settings.validate()?;
        let sigma_0 = match require_equal(Engine::GaussianClosed, cfg)? {
            Transmission::Gaussian { sigma } => sigma,
            other => {
                return Err(HomError::UnsupportedFilter {
                    engine: Engine::GaussianClosed,
                    reason: format!("needs Gaussian filters, got {other:?}"),
                })
            }
        };
        let mut engine = GaussianClosedEngine {
            cfg,
            sigma_0,
            settings: *settings,
            baseline: 0.0,
        };
        let base = engine.integrate(None, settings)?;
        engine.baseline = base.re;
        Ok(engine)
    }

    /// I(z₁, z₂; δτ); `None` replaces the delay-dependent brace by one.
    pub fn kernel(&self, z1: f64, z2: f64, delay_ps: Option<f64>) -> Complex64 {
        let sp = self.cfg.sigma_p_rad_per_ps;
        let s0 = self.sigma_0;
        let s0_2 = s0 * s0;
        let power = self.cfg.pumps.peak_power_w;
        let beta_dz = self.cfg.fiber.beta2_ps2_per_m * (z1 - z2);
        let prefactor = SQRT_2 * PI * PI * power * power * s0_2 / (sp * (sp * sp + s0_2).sqrt());
        let spread = 4.0 + beta_dz * beta_dz * s0_2 * s0_2;
        let front = Complex64::from_polar(
            prefactor / spread.powf(0.25),
            0.5 * (-beta_dz * s0_2 / 2.0).atan(),
        );
        let brace = match delay_ps {
            None => Complex64::new(1.0, 0.0),
            Some(t) => {
                let t2 = t * t;
                let exponent = Complex64::new(
                    -2.0 * t2 * s0_2 / spread,
                    beta_dz * t2 * s0_2 * s0_2 / spread,
                );
                Complex64::new(1.0, 0.0) - exponent.exp()
            }
        };
        front * brace
    }

    fn integrate(
        &self,
        delay_ps: Option<f64>,
        settings: &QuadratureSettings,
    ) -> Result<Complex64, HomError> {
        let length = self.cfg.fiber.length_m;
        let estimate = integrate_2d(
            |z1, z2| {
                g_factor(z1, self.cfg)
                    * g_factor(z2, self.cfg).conj()
                    * self.kernel(z1, z2, delay_ps)
            },
            (-length, 0.0),
            (-length, 0.0),
            settings,
        )?;
        let tolerance = estimate.error
            + 10.0
                * settings
                    .abs_tol
                    .max(settings.rel_tol * estimate.value.norm());
        if estimate.value.im.abs() > tolerance {
            return Err(HomError::ImaginaryResidue {
                imag: estimate.value.im,
                tolerance,
            });
        }
        Ok(estimate.value)
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }
}

impl RateModel for GaussianClosedEngine<'_> {
    fn engine(&self) -> Engine {
        Engine::GaussianClosed
    }

    fn rate(&self, delay_ps: f64) -> Result<f64, HomError> {
        let mut settings = self.settings;
        settings.abs_tol = settings.abs_tol.max(settings.rel_tol * self.baseline);
        let raw = self.integrate(Some(delay_ps), &settings)?;
        clamp_rate(
            delay_ps,
            normalize(raw.re, self.baseline)?,
            10.0 * settings.rel_tol,
        )
    }
}

pub fn rate_gaussian_closed(
    delay_ps: f64,
    cfg: &ExperimentConfig,
    settings: &QuadratureSettings,
) -> Result<f64, HomError> {
    GaussianClosedEngine::new(cfg, settings)?.rate(delay_ps)
}
