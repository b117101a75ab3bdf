//! Measured coincidence data and least-squares fits of dip models to it.
//!
//! Two model families are available: a phenomenological Gaussian dip
//! `B·[1 − V·exp(−(δτ−τc)²/(2w²))]`, and an engine-backed model
//! `B·[1 − s·(1 − R(δτ − τc))]` where `R` is the normalized rate of one of
//! the coincidence engines and only the nuisance parameters `B`, `τc`, `s`
//! are adjusted.

mod dataset;
mod lm;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hom::{
    compute_curve, delay_grid, dip_metrics, DipCurve, DipMetrics, Engine, HomError, HomSettings,
};
use crate::interp::CubicSpline;
use crate::units::ExperimentConfig;

pub use dataset::{ingest_csv, ingest_reader, CoincidenceDataset, MIN_POINTS};
pub use lm::{minimize, LeastSquares, LmOptions, LmOutcome};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{found} distinct delays, need at least {needed}")]
    InsufficientData { found: usize, needed: usize },
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("fit did not converge after {} iterations (gradient cosine {:e})", .best.iterations, .best.gradient_cosine)]
    NotConverged { best: Box<FitResult> },
    #[error(transparent)]
    Hom(#[from] HomError),
}

/// Model evaluated on a dense delay grid for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCurve {
    pub delays_ps: Vec<f64>,
    pub counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    /// Weighted sum of squared residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dip depth fitted to (numerically) zero; center and width are then
    /// meaningless.
    pub degenerate: bool,
    /// Visibility outside [0, 1.05].
    pub suspicious: bool,
    pub gradient_cosine: f64,
    pub objective_history: Vec<f64>,
    pub derived_metrics: Option<DipMetrics>,
    pub curve: FittedCurve,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn visibility(&self) -> Option<f64> {
        self.derived_metrics.map(|m| m.visibility)
    }

    pub fn fwhm_ps(&self) -> Option<f64> {
        self.derived_metrics.map(|m| m.fwhm_ps)
    }
}

const DENSE_POINTS: usize = 1001;
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

fn dense_axis(data: &CoincidenceDataset) -> Vec<f64> {
    let lo = data.delays_ps[0];
    let hi = data.delays_ps[data.len() - 1];
    (0..DENSE_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (DENSE_POINTS - 1) as f64)
        .collect()
}

fn data_norm(data: &CoincidenceDataset) -> f64 {
    (0..data.len())
        .map(|k| (data.counts[k] / data.sigma(k)).powi(2))
        .sum()
}

/// Deterministic starting point `[B, V, τc, w]` read off the data.
pub fn initial_guess(data: &CoincidenceDataset) -> [f64; 4] {
    let n = data.len();
    let x = &data.delays_ps;
    let y = &data.counts;
    let edge = ((n as f64 * 0.1).round() as usize).max(1);
    let baseline =
        (y[..edge].iter().sum::<f64>() + y[n - edge..].iter().sum::<f64>()) / (2 * edge) as f64;
    let (k_min, &y_min) = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("dataset is non-empty");
    let visibility = if baseline > 0.0 {
        (1.0 - y_min / baseline).clamp(1e-3, 1.0)
    } else {
        1e-3
    };
    let half = 0.5 * (baseline + y_min);
    let cross = |a: usize, b: usize| {
        let t = if y[b] != y[a] {
            (half - y[a]) / (y[b] - y[a])
        } else {
            0.5
        };
        x[a] + t.clamp(0.0, 1.0) * (x[b] - x[a])
    };
    let left = (0..k_min)
        .rev()
        .find(|&k| y[k] >= half)
        .map(|k| cross(k, k + 1));
    let right = (k_min + 1..n)
        .find(|&k| y[k] >= half)
        .map(|k| cross(k - 1, k));
    let span = x[n - 1] - x[0];
    let width = match (left, right) {
        (Some(l), Some(r)) if r > l => (r - l) / FWHM_PER_SIGMA,
        (Some(l), None) => 2.0 * (x[k_min] - l) / FWHM_PER_SIGMA,
        (None, Some(r)) => 2.0 * (r - x[k_min]) / FWHM_PER_SIGMA,
        _ => span / 10.0,
    };
    let width = if width > 0.0 { width } else { span / 10.0 };
    [baseline, visibility, x[k_min], width]
}

struct GaussianDip<'a> {
    data: &'a CoincidenceDataset,
}

fn gaussian_dip(t: f64, p: &[f64]) -> f64 {
    let z = (t - p[2]) / p[3];
    p[0] * (1.0 - p[1] * (-0.5 * z * z).exp())
}

impl LeastSquares for GaussianDip<'_> {
    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        if p[3] == 0.0 {
            return None;
        }
        let d = self.data;
        Some(DVector::from_fn(d.len(), |k, _| {
            (gaussian_dip(d.delays_ps[k], p) - d.counts[k]) / d.sigma(k)
        }))
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        if p[3] == 0.0 {
            return None;
        }
        let d = self.data;
        let [b, v, tc, w] = [p[0], p[1], p[2], p[3]];
        Some(DMatrix::from_fn(d.len(), 4, |k, c| {
            let dt = d.delays_ps[k] - tc;
            let e = (-0.5 * dt * dt / (w * w)).exp();
            let value = match c {
                0 => 1.0 - v * e,
                1 => -b * e,
                2 => -b * v * e * dt / (w * w),
                _ => -b * v * e * dt * dt / (w * w * w),
            };
            value / d.sigma(k)
        }))
    }

    fn data_norm(&self) -> f64 {
        data_norm(self.data)
    }
}

/// Least-squares fit of the Gaussian dip model, weighted by the inverse
/// variances when the dataset carries uncertainties.
pub fn fit_gaussian_dip(data: &CoincidenceDataset) -> Result<FitResult, FitError> {
    fit_gaussian_dip_with(data, &LmOptions::default())
}

pub fn fit_gaussian_dip_with(
    data: &CoincidenceDataset,
    opts: &LmOptions,
) -> Result<FitResult, FitError> {
    let start = initial_guess(data);
    let out = minimize(&GaussianDip { data }, &start, opts);
    let p = &out.params;
    let (b, v, tc, w) = (p[0], p[1], p[2], p[3].abs());
    let degenerate = v.abs() < 1e-6;
    let params = BTreeMap::from([
        ("baseline".to_string(), b),
        ("visibility".to_string(), v),
        ("center_ps".to_string(), tc),
        ("width_ps".to_string(), w),
        ("fwhm_ps".to_string(), FWHM_PER_SIGMA * w),
    ]);
    let axis = dense_axis(data);
    let counts = axis.iter().map(|&t| gaussian_dip(t, p)).collect();
    let result = FitResult {
        model: "gaussian_dip".into(),
        params,
        residual_norm: out.objective,
        iterations: out.iterations,
        converged: out.converged,
        degenerate,
        suspicious: !(0.0..=1.05).contains(&v),
        gradient_cosine: out.gradient_cosine,
        objective_history: out.history,
        derived_metrics: Some(DipMetrics {
            visibility: v,
            fwhm_ps: FWHM_PER_SIGMA * w,
            center_ps: tc,
            baseline: b,
            non_monotone: false,
        }),
        curve: FittedCurve {
            delays_ps: axis,
            counts,
        },
    };
    finish(result)
}

fn finish(result: FitResult) -> Result<FitResult, FitError> {
    if result.suspicious {
        log::warn!(
            "fitted visibility {:?} is outside [0, 1.05]",
            result.visibility()
        );
    }
    if result.converged {
        Ok(result)
    } else {
        Err(FitError::NotConverged {
            best: Box::new(result),
        })
    }
}

/// Which nuisance parameters of the engine-backed model are adjusted.
/// Fixed parameters keep their starting values: baseline from the outer
/// points of the data, center 0, scale 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFitOptions {
    pub free_baseline: bool,
    pub free_center: bool,
    pub free_scale: bool,
    /// Spacing of the cached engine curve.
    pub step_ps: f64,
    /// Extra reach of the cached curve beyond the data's delays.
    pub margin_ps: f64,
    pub hom: HomSettings,
    pub lm: LmOptions,
}

impl Default for ModelFitOptions {
    fn default() -> Self {
        ModelFitOptions {
            free_baseline: true,
            free_center: true,
            free_scale: true,
            step_ps: 0.05,
            margin_ps: 10.0,
            hom: HomSettings::default(),
            lm: LmOptions::default(),
        }
    }
}

/// Engine rate sampled once on a symmetric grid and interpolated; beyond
/// the grid the rate is taken at its large-delay value of one.
pub struct CachedRate {
    spline: CubicSpline,
    reach: f64,
    pub curve: DipCurve,
}

impl CachedRate {
    pub fn new(
        engine: Engine,
        cfg: &ExperimentConfig,
        settings: &HomSettings,
        reach_ps: f64,
        step_ps: f64,
    ) -> Result<Self, FitError> {
        let half = (reach_ps / step_ps).ceil() * step_ps;
        let delays = delay_grid(-half, half, step_ps)?;
        let curve = compute_curve(engine, cfg, settings, &delays)?;
        let spline = CubicSpline::new(&curve.delays_ps, &curve.rates)
            .ok_or_else(|| FitError::Invalid("engine curve too short".into()))?;
        let reach = curve.delays_ps[curve.delays_ps.len() - 1];
        Ok(CachedRate {
            spline,
            reach,
            curve,
        })
    }

    pub fn rate(&self, delay_ps: f64) -> f64 {
        if delay_ps.abs() > self.reach {
            1.0
        } else {
            self.spline.eval(delay_ps)
        }
    }
}

const NUISANCE: [&str; 3] = ["baseline", "center_ps", "scale"];

struct EngineModel<'a> {
    data: &'a CoincidenceDataset,
    rate: &'a CachedRate,
    fixed: [f64; 3],
    free: [bool; 3],
    typical: [f64; 3],
}

impl EngineModel<'_> {
    fn expand(&self, p: &[f64]) -> [f64; 3] {
        let mut full = self.fixed;
        let mut it = p.iter();
        for (slot, _) in full.iter_mut().zip(self.free).filter(|(_, f)| *f) {
            *slot = *it.next().expect("one value per free parameter");
        }
        full
    }

    fn model(&self, t: f64, full: &[f64; 3]) -> f64 {
        full[0] * (1.0 - full[2] * (1.0 - self.rate.rate(t - full[1])))
    }
}

impl LeastSquares for EngineModel<'_> {
    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        let full = self.expand(p);
        let d = self.data;
        Some(DVector::from_fn(d.len(), |k, _| {
            (self.model(d.delays_ps[k], &full) - d.counts[k]) / d.sigma(k)
        }))
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        let base = self.residuals(p)?;
        let free_typical: Vec<f64> = (0..3)
            .filter(|&k| self.free[k])
            .map(|k| self.typical[k])
            .collect();
        let mut j = DMatrix::zeros(base.len(), p.len());
        for c in 0..p.len() {
            let h = 1e-6 * p[c].abs().max(free_typical[c]);
            let mut shifted = p.to_vec();
            shifted[c] += h;
            let r = self.residuals(&shifted)?;
            j.set_column(c, &((r - &base) / h));
        }
        Some(j)
    }

    fn data_norm(&self) -> f64 {
        data_norm(self.data)
    }
}

/// Fits the nuisance parameters of an engine-backed dip with the physics of
/// `cfg` held fixed.
pub fn fit_model(
    data: &CoincidenceDataset,
    cfg: &ExperimentConfig,
    engine: Engine,
    opts: &ModelFitOptions,
) -> Result<FitResult, FitError> {
    let reach = data.delays_ps.iter().fold(0.0f64, |m, d| m.max(d.abs())) + opts.margin_ps;
    let rate = CachedRate::new(engine, cfg, &opts.hom, reach, opts.step_ps)?;
    fit_cached(data, &rate, engine, opts)
}

/// As [`fit_model`] with an engine curve computed beforehand.
pub fn fit_cached(
    data: &CoincidenceDataset,
    rate: &CachedRate,
    engine: Engine,
    opts: &ModelFitOptions,
) -> Result<FitResult, FitError> {
    let guess = initial_guess(data);
    let fixed = [guess[0], 0.0, 1.0];
    let free = [opts.free_baseline, opts.free_center, opts.free_scale];
    let problem = EngineModel {
        data,
        rate,
        fixed,
        free,
        typical: [guess[0].abs().max(f64::MIN_POSITIVE), 1.0, 1.0],
    };
    let start: Vec<f64> = (0..3).filter(|&k| free[k]).map(|k| fixed[k]).collect();
    let (full, out) = if start.is_empty() {
        let r = problem.residuals(&[]).expect("residuals");
        let out = LmOutcome {
            params: vec![],
            objective: r.norm_squared(),
            iterations: 0,
            converged: true,
            gradient_cosine: 0.0,
            history: vec![r.norm_squared()],
        };
        (fixed, out)
    } else {
        let out = minimize(&problem, &start, &opts.lm);
        (problem.expand(&out.params), out)
    };
    let params: BTreeMap<String, f64> = NUISANCE
        .iter()
        .zip(full)
        .map(|(n, v)| (n.to_string(), v))
        .collect();
    let axis = dense_axis(data);
    let counts: Vec<f64> = axis.iter().map(|&t| problem.model(t, &full)).collect();
    let derived_metrics = DipCurve::new(axis.clone(), counts.clone(), engine)
        .ok()
        .and_then(|c| dip_metrics(&c).ok());
    let visibility = derived_metrics.map(|m| m.visibility);
    let result = FitResult {
        model: engine.to_string(),
        params,
        residual_norm: out.objective,
        iterations: out.iterations,
        converged: out.converged,
        degenerate: full[2].abs() < 1e-6,
        suspicious: visibility.is_some_and(|v| !(0.0..=1.05).contains(&v)),
        gradient_cosine: out.gradient_cosine,
        objective_history: out.history,
        derived_metrics,
        curve: FittedCurve {
            delays_ps: axis,
            counts,
        },
    };
    finish(result)
}
