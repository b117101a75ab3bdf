//! Visibility loss from beam-splitter imbalance and from angular mismatch of
//! the two photons' spatial modes.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// First positive zero of J₁.
pub const J1_FIRST_ZERO: f64 = 3.831_705_970_207_512_3;

#[derive(Debug, Error, PartialEq)]
pub enum ImperfectionError {
    #[error("beam splitter needs R, T >= 0 with R + T = 1 (got R = {r}, T = {t})")]
    InvalidSplitter { r: f64, t: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("target overlap {0} must lie strictly between 0 and 1")]
    TargetOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitter {
    reflectance: f64,
    transmittance: f64,
}

impl BeamSplitter {
    pub fn new(reflectance: f64, transmittance: f64) -> Result<Self, ImperfectionError> {
        let ok = reflectance >= 0.0
            && transmittance >= 0.0
            && (reflectance + transmittance - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(ImperfectionError::InvalidSplitter {
                r: reflectance,
                t: transmittance,
            });
        }
        Ok(BeamSplitter {
            reflectance,
            transmittance,
        })
    }

    pub fn reflectance(&self) -> f64 {
        self.reflectance
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }
}

/// 2RT/(R² + T²); one for a balanced splitter.
pub fn bs_visibility_factor(bs: &BeamSplitter) -> f64 {
    let (r, t) = (bs.reflectance, bs.transmittance);
    2.0 * r * t / (r * r + t * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGeometry {
    pub lens_diameter_m: f64,
    pub wavelength_m: f64,
    pub angle_rad: f64,
}

impl SpatialGeometry {
    pub fn new(
        lens_diameter_m: f64,
        wavelength_m: f64,
        angle_rad: f64,
    ) -> Result<Self, ImperfectionError> {
        let g = SpatialGeometry {
            lens_diameter_m,
            wavelength_m,
            angle_rad,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ImperfectionError> {
        if !(self.lens_diameter_m > 0.0) || !self.lens_diameter_m.is_finite() {
            return Err(ImperfectionError::InvalidGeometry(format!(
                "lens diameter {} m",
                self.lens_diameter_m
            )));
        }
        if !(self.wavelength_m > 0.0) || !self.wavelength_m.is_finite() {
            return Err(ImperfectionError::InvalidGeometry(format!(
                "wavelength {} m",
                self.wavelength_m
            )));
        }
        if !(self.angle_rad.abs() < FRAC_PI_2) {
            return Err(ImperfectionError::InvalidGeometry(format!(
                "angle {} rad",
                self.angle_rad
            )));
        }
        Ok(())
    }

    /// x = π d |sin θ| / λ.
    pub fn bessel_argument(&self) -> f64 {
        PI * self.lens_diameter_m * self.angle_rad.sin().abs() / self.wavelength_m
    }
}

/// (2J₁(x)/x)², equal to one at x = 0.
pub fn jinc_squared(x: f64) -> f64 {
    let x = x.abs();
    let ratio = if x < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 8.0 + x2 * x2 / 192.0
    } else {
        2.0 * bessel_j1(x) / x
    };
    ratio * ratio
}

/// Overlap of two tilted plane waves over circular apertures of diameter d.
pub fn spatial_overlap(geom: &SpatialGeometry) -> Result<f64, ImperfectionError> {
    geom.validate()?;
    Ok(jinc_squared(geom.bessel_argument()))
}

/// Angle on the first lobe (|x| below the first zero of J₁) at which the
/// overlap equals `target`.
pub fn solve_angle_for_overlap(
    target: f64,
    lens_diameter_m: f64,
    wavelength_m: f64,
) -> Result<f64, ImperfectionError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(ImperfectionError::TargetOutOfRange(target));
    }
    SpatialGeometry::new(lens_diameter_m, wavelength_m, 0.0)?;
    let (mut lo, mut hi) = (0.0, J1_FIRST_ZERO);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if jinc_squared(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let sin_theta = x * wavelength_m / (PI * lens_diameter_m);
    if sin_theta >= 1.0 {
        return Err(ImperfectionError::InvalidGeometry(
            "aperture too small for the requested overlap".into(),
        ));
    }
    Ok(sin_theta.asin())
}

/// Ideal visibility scaled by the splitter factor and the spatial overlap,
/// treating the two mechanisms as independent.
pub fn predicted_visibility(
    ideal: f64,
    bs: &BeamSplitter,
    geom: &SpatialGeometry,
) -> Result<f64, ImperfectionError> {
    Ok(ideal * bs_visibility_factor(bs) * spatial_overlap(geom)?)
}

/// Bessel function of the first kind, order one.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    let value = if ax < 8.0 {
        j1_series(ax)
    } else if ax < 1000.0 {
        j1_miller(ax)
    } else {
        j1_asymptotic(ax)
    };
    if x < 0.0 {
        -value
    } else {
        value
    }
}

fn j1_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 0.5 * x;
    let mut sum = term;
    for k in 1..60 {
        term *= q / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

// Backward recurrence normalized with J₀ + 2ΣJ₂ₖ = 1.
fn j1_miller(x: f64) -> f64 {
    let start = 2 * ((x + 30.0 + (50.0 * x).sqrt()) as usize / 2);
    let (mut next, mut current) = (0.0, 1e-30);
    let mut j1 = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * current - next;
        next = current;
        current = prev;
        // current now holds J_{k-1}
        if k - 1 == 1 {
            j1 = current;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * current;
        }
        if current.abs() > 1e250 {
            current *= 1e-250;
            next *= 1e-250;
            j1 *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += current;
    j1 / norm
}

fn j1_asymptotic(x: f64) -> f64 {
    let mu = 4.0;
    let y = 1.0 / (8.0 * x);
    let p = 1.0 - (mu - 1.0) * (mu - 9.0) / 2.0 * y * y
        + (mu - 1.0) * (mu - 9.0) * (mu - 25.0) * (mu - 49.0) / 24.0 * y.powi(4);
    let q = (mu - 1.0) * y - (mu - 1.0) * (mu - 9.0) * (mu - 25.0) / 6.0 * y.powi(3);
    let chi = x - 3.0 * FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
