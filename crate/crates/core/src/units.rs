//! Parameter model and laboratory-to-internal unit conversions.
//!
//! Internal units are rad/ps for angular frequency, ps for time, m for
//! length and W for power. With these, products such as `beta2 * z * sigma^2`
//! are of order one for fiber-scale sources.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in nm/ps (3e8 m/s, the rounded value used throughout).
pub const SPEED_OF_LIGHT_NM_PER_PS: f64 = 3.0e5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitsError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("pump wavelengths must differ (both {0} nm)")]
    DegeneratePumps(f64),
}

fn positive(name: &'static str, value: f64) -> Result<f64, UnitsError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(UnitsError::NonPositive { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, UnitsError> {
    if !value.is_finite() {
        Err(UnitsError::NonFinite { name, value })
    } else if value < 0.0 {
        Err(UnitsError::Negative { name, value })
    } else {
        Ok(value)
    }
}

/// Which spectral profile a quoted FWHM refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FwhmConvention {
    /// Full width at half maximum of the power spectrum |E|^2.
    #[default]
    Power,
    /// Full width at half maximum of the field amplitude |E|.
    Amplitude,
}

/// ω = 2πc/λ in rad/ps.
pub fn wavelength_to_angular_frequency(lambda_nm: f64) -> Result<f64, UnitsError> {
    let lambda_nm = positive("wavelength", lambda_nm)?;
    Ok(2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS / lambda_nm)
}

/// Inverse of [`wavelength_to_angular_frequency`].
pub fn angular_frequency_to_wavelength(omega: f64) -> Result<f64, UnitsError> {
    let omega = positive("angular frequency", omega)?;
    Ok(2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS / omega)
}

/// Full width Δω = 2πc·Δλ/λ² (rad/ps) of a band of width `fwhm_nm` centred at `center_lambda_nm`.
pub fn fwhm_nm_to_angular(fwhm_nm: f64, center_lambda_nm: f64) -> Result<f64, UnitsError> {
    let fwhm_nm = positive("fwhm", fwhm_nm)?;
    let center = positive("center wavelength", center_lambda_nm)?;
    Ok(2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS * fwhm_nm / (center * center))
}

/// Gaussian amplitude width σ of `exp(-(ω-Ω)²/(2σ²))` whose FWHM (under `convention`) is `fwhm_nm`.
pub fn gaussian_sigma(
    fwhm_nm: f64,
    center_lambda_nm: f64,
    convention: FwhmConvention,
) -> Result<f64, UnitsError> {
    let width = fwhm_nm_to_angular(fwhm_nm, center_lambda_nm)?;
    Ok(width / gaussian_width_factor(convention))
}

/// σ for a power-spectrum FWHM: σ = Δω / (2√ln2).
pub fn fwhm_nm_to_sigma(fwhm_nm: f64, center_lambda_nm: f64) -> Result<f64, UnitsError> {
    gaussian_sigma(fwhm_nm, center_lambda_nm, FwhmConvention::Power)
}

/// Inverse of [`gaussian_sigma`].
pub fn sigma_to_fwhm_nm(
    sigma: f64,
    center_lambda_nm: f64,
    convention: FwhmConvention,
) -> Result<f64, UnitsError> {
    let sigma = positive("sigma", sigma)?;
    let center = positive("center wavelength", center_lambda_nm)?;
    let width = sigma * gaussian_width_factor(convention);
    Ok(width * center * center / (2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS))
}

// FWHM / σ for exp(-x²/(2σ²)) (amplitude) or its square (power).
fn gaussian_width_factor(convention: FwhmConvention) -> f64 {
    match convention {
        FwhmConvention::Power => 2.0 * LN_2.sqrt(),
        FwhmConvention::Amplitude => 2.0 * (2.0 * LN_2).sqrt(),
    }
}

/// σ₀ of the super-Gaussian amplitude `exp(-ν⁴/σ₀⁴)` with the given FWHM.
///
/// Under the power convention the power transmission `exp(-2ν⁴/σ₀⁴)` is one
/// half at ν = σ₀·(ln2/2)^¼, so that point is pinned to half the FWHM.
pub fn super_gaussian_sigma(
    fwhm_nm: f64,
    center_lambda_nm: f64,
    convention: FwhmConvention,
) -> Result<f64, UnitsError> {
    let half_width = 0.5 * fwhm_nm_to_angular(fwhm_nm, center_lambda_nm)?;
    let level = match convention {
        FwhmConvention::Power => LN_2 / 2.0,
        FwhmConvention::Amplitude => LN_2,
    };
    Ok(half_width / level.powf(0.25))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    pub length_m: f64,
    /// k''(Ω) in ps²/m.
    pub beta2_ps2_per_m: f64,
    #[serde(rename = "gamma_per_W_m")]
    pub gamma_per_w_m: f64,
}

impl FiberParams {
    pub fn validate(&self) -> Result<(), UnitsError> {
        positive("fiber length", self.length_m)?;
        if !self.beta2_ps2_per_m.is_finite() {
            return Err(UnitsError::NonFinite {
                name: "beta2",
                value: self.beta2_ps2_per_m,
            });
        }
        non_negative("gamma", self.gamma_per_w_m)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpParams {
    pub lambda_p1_nm: f64,
    pub lambda_p2_nm: f64,
    /// Common FWHM of both pump spectra.
    pub fwhm_nm: f64,
    /// Common peak power P₁ = P₂.
    #[serde(rename = "peak_power_W")]
    pub peak_power_w: f64,
}

impl PumpParams {
    pub fn validate(&self) -> Result<(), UnitsError> {
        positive("pump 1 wavelength", self.lambda_p1_nm)?;
        positive("pump 2 wavelength", self.lambda_p2_nm)?;
        if self.lambda_p1_nm == self.lambda_p2_nm {
            return Err(UnitsError::DegeneratePumps(self.lambda_p1_nm));
        }
        positive("pump fwhm", self.fwhm_nm)?;
        non_negative("pump peak power", self.peak_power_w)?;
        Ok(())
    }
}

/// Transmission profile of a bandpass filter, each stage with its own FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum FilterProfile {
    Gaussian {
        fwhm_nm: f64,
    },
    #[serde(rename = "super_gaussian4")]
    SuperGaussian4 {
        fwhm_nm: f64,
    },
    Cascade {
        gaussian_fwhm_nm: f64,
        super_gaussian_fwhm_nm: f64,
    },
}

impl FilterProfile {
    pub fn validate(&self) -> Result<(), UnitsError> {
        match *self {
            FilterProfile::Gaussian { fwhm_nm } | FilterProfile::SuperGaussian4 { fwhm_nm } => {
                positive("filter fwhm", fwhm_nm)?;
            }
            FilterProfile::Cascade {
                gaussian_fwhm_nm,
                super_gaussian_fwhm_nm,
            } => {
                positive("cascade gaussian fwhm", gaussian_fwhm_nm)?;
                positive("cascade super-gaussian fwhm", super_gaussian_fwhm_nm)?;
            }
        }
        Ok(())
    }

    /// Same shape with every FWHM multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> FilterProfile {
        match *self {
            FilterProfile::Gaussian { fwhm_nm } => FilterProfile::Gaussian {
                fwhm_nm: fwhm_nm * factor,
            },
            FilterProfile::SuperGaussian4 { fwhm_nm } => FilterProfile::SuperGaussian4 {
                fwhm_nm: fwhm_nm * factor,
            },
            FilterProfile::Cascade {
                gaussian_fwhm_nm,
                super_gaussian_fwhm_nm,
            } => FilterProfile::Cascade {
                gaussian_fwhm_nm: gaussian_fwhm_nm * factor,
                super_gaussian_fwhm_nm: super_gaussian_fwhm_nm * factor,
            },
        }
    }

    pub fn resolve(
        &self,
        center_lambda_nm: f64,
        convention: FwhmConvention,
    ) -> Result<Transmission, UnitsError> {
        self.validate()?;
        Ok(match *self {
            FilterProfile::Gaussian { fwhm_nm } => Transmission::Gaussian {
                sigma: gaussian_sigma(fwhm_nm, center_lambda_nm, convention)?,
            },
            FilterProfile::SuperGaussian4 { fwhm_nm } => Transmission::SuperGaussian4 {
                sigma: super_gaussian_sigma(fwhm_nm, center_lambda_nm, convention)?,
            },
            FilterProfile::Cascade {
                gaussian_fwhm_nm,
                super_gaussian_fwhm_nm,
            } => Transmission::Cascade {
                gaussian_sigma: gaussian_sigma(gaussian_fwhm_nm, center_lambda_nm, convention)?,
                super_sigma: super_gaussian_sigma(
                    super_gaussian_fwhm_nm,
                    center_lambda_nm,
                    convention,
                )?,
            },
        })
    }
}

/// Filters in front of the two detectors. `idler` defaults to the signal profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub signal: FilterProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idler: Option<FilterProfile>,
}

impl FilterSpec {
    pub fn symmetric(profile: FilterProfile) -> Self {
        FilterSpec {
            signal: profile,
            idler: None,
        }
    }

    pub fn idler_profile(&self) -> FilterProfile {
        self.idler.unwrap_or(self.signal)
    }

    pub fn is_symmetric(&self) -> bool {
        self.idler.is_none_or(|idler| idler == self.signal)
    }
}

/// Filter field-amplitude transmission in internal units (ν in rad/ps from Ω).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Transmission {
    /// `exp(-ν²/(2σ²))`
    Gaussian { sigma: f64 },
    /// `exp(-ν⁴/σ⁴)`
    #[serde(rename = "super_gaussian4")]
    SuperGaussian4 { sigma: f64 },
    /// Product of a Gaussian and a super-Gaussian stage.
    Cascade {
        gaussian_sigma: f64,
        super_sigma: f64,
    },
}

impl Transmission {
    #[inline]
    pub fn amplitude(&self, nu: f64) -> f64 {
        match *self {
            Transmission::Gaussian { sigma } => (-nu * nu / (2.0 * sigma * sigma)).exp(),
            Transmission::SuperGaussian4 { sigma } => {
                let r = (nu / sigma).powi(2);
                (-r * r).exp()
            }
            Transmission::Cascade {
                gaussian_sigma,
                super_sigma,
            } => {
                let r = (nu / super_sigma).powi(2);
                (-nu * nu / (2.0 * gaussian_sigma * gaussian_sigma) - r * r).exp()
            }
        }
    }

    /// Width parameter used to size truncated integration boxes.
    pub fn width(&self) -> f64 {
        match *self {
            Transmission::Gaussian { sigma } | Transmission::SuperGaussian4 { sigma } => sigma,
            Transmission::Cascade {
                gaussian_sigma,
                super_sigma,
            } => gaussian_sigma.min(super_sigma),
        }
    }
}

/// Laboratory-unit configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    pub length_m: f64,
    pub beta2_ps2_per_km: f64,
    #[serde(rename = "gamma_per_W_m")]
    pub gamma_per_w_m: f64,
    #[serde(rename = "peak_power_W")]
    pub peak_power_w: f64,
    pub lambda_p1_nm: f64,
    pub lambda_p2_nm: f64,
    pub pump_fwhm_nm: f64,
    pub filter: FilterSpec,
    #[serde(default)]
    pub fwhm_convention: FwhmConvention,
}

impl LabConfig {
    /// Parameter set of the reference 300 m dual-pump experiment.
    pub fn reference() -> Self {
        LabConfig {
            length_m: 300.0,
            beta2_ps2_per_km: -0.116,
            gamma_per_w_m: 1.8e-3,
            peak_power_w: 0.36,
            lambda_p1_nm: 1555.92,
            lambda_p2_nm: 1545.95,
            pump_fwhm_nm: 0.8,
            filter: FilterSpec::symmetric(FilterProfile::Gaussian { fwhm_nm: 0.8 }),
            fwhm_convention: FwhmConvention::Power,
        }
    }
}

impl Default for LabConfig {
    fn default() -> Self {
        Self::reference()
    }
}

/// Validated configuration with all derived internal-unit quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub fiber: FiberParams,
    pub pumps: PumpParams,
    pub filter: FilterSpec,
    pub fwhm_convention: FwhmConvention,
    /// Signal/idler centre Ω = (Ω_p1 + Ω_p2)/2.
    pub omega_rad_per_ps: f64,
    /// Δ = Ω_p2 − Ω_p1.
    pub delta_rad_per_ps: f64,
    pub sigma_p_rad_per_ps: f64,
    pub center_lambda_nm: f64,
    pub signal_filter: Transmission,
    pub idler_filter: Transmission,
}

impl ExperimentConfig {
    /// Width parameter of the signal-arm filter.
    pub fn sigma_0_rad_per_ps(&self) -> f64 {
        self.signal_filter.width()
    }

    pub fn omega_p1(&self) -> f64 {
        self.omega_rad_per_ps - 0.5 * self.delta_rad_per_ps
    }

    pub fn omega_p2(&self) -> f64 {
        self.omega_rad_per_ps + 0.5 * self.delta_rad_per_ps
    }

    /// Largest spectral width among pumps and both filters.
    pub fn max_width(&self) -> f64 {
        self.sigma_p_rad_per_ps
            .max(self.signal_filter.width())
            .max(self.idler_filter.width())
    }

    /// Copy with a different filter specification.
    pub fn with_filter(&self, filter: FilterSpec) -> Result<Self, UnitsError> {
        let signal_filter = filter
            .signal
            .resolve(self.center_lambda_nm, self.fwhm_convention)?;
        let idler_filter = filter
            .idler_profile()
            .resolve(self.center_lambda_nm, self.fwhm_convention)?;
        Ok(ExperimentConfig {
            filter,
            signal_filter,
            idler_filter,
            ..self.clone()
        })
    }
}

pub fn build_config(lab: &LabConfig) -> Result<ExperimentConfig, UnitsError> {
    let fiber = FiberParams {
        length_m: lab.length_m,
        beta2_ps2_per_m: lab.beta2_ps2_per_km * 1e-3,
        gamma_per_w_m: lab.gamma_per_w_m,
    };
    fiber.validate()?;
    let pumps = PumpParams {
        lambda_p1_nm: lab.lambda_p1_nm,
        lambda_p2_nm: lab.lambda_p2_nm,
        fwhm_nm: lab.pump_fwhm_nm,
        peak_power_w: lab.peak_power_w,
    };
    pumps.validate()?;

    let omega_p1 = wavelength_to_angular_frequency(pumps.lambda_p1_nm)?;
    let omega_p2 = wavelength_to_angular_frequency(pumps.lambda_p2_nm)?;
    let omega = 0.5 * (omega_p1 + omega_p2);
    let delta = omega_p2 - omega_p1;
    let center_lambda_nm = angular_frequency_to_wavelength(omega)?;

    // Both pump bandwidths are converted at the signal/idler centre.
    let sigma_p = gaussian_sigma(pumps.fwhm_nm, center_lambda_nm, lab.fwhm_convention)?;
    let signal_filter = lab
        .filter
        .signal
        .resolve(center_lambda_nm, lab.fwhm_convention)?;
    let idler_filter = lab
        .filter
        .idler_profile()
        .resolve(center_lambda_nm, lab.fwhm_convention)?;

    Ok(ExperimentConfig {
        fiber,
        pumps,
        filter: lab.filter,
        fwhm_convention: lab.fwhm_convention,
        omega_rad_per_ps: omega,
        delta_rad_per_ps: delta,
        sigma_p_rad_per_ps: sigma_p,
        center_lambda_nm,
        signal_filter,
        idler_filter,
    })
}
