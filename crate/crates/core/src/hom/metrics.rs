use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DipCurve, Engine};
use crate::interp::CubicSpline;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("curve has {0} samples, need at least 5")]
    TooFewPoints(usize),
    #[error("curve shows no dip below its baseline")]
    NoDip,
    #[error("the half-depth level is not crossed on the {0} flank")]
    NotBracketed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipMetrics {
    pub visibility: f64,
    pub fwhm_ps: f64,
    pub center_ps: f64,
    pub baseline: f64,
    /// A flank crosses the half-depth level more than once; the widest pair
    /// of crossings was used.
    pub non_monotone: bool,
}

/// JSON form written next to an exported curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub visibility: f64,
    pub fwhm_ps: f64,
    pub center_ps: f64,
    pub engine: Engine,
}

impl MetricsReport {
    pub fn new(m: &DipMetrics, engine: Engine) -> Self {
        MetricsReport {
            visibility: m.visibility,
            fwhm_ps: m.fwhm_ps,
            center_ps: m.center_ps,
            engine,
        }
    }
}

/// Visibility, FWHM and center of a sampled dip.
///
/// The baseline is the mean of the outermost 10% of samples (half on each
/// side). Half-depth crossings come from bisection on a cubic spline through
/// the samples, bracketed by the sample pair that straddles the level.
pub fn dip_metrics(curve: &DipCurve) -> Result<DipMetrics, MetricsError> {
    let xs = &curve.delays_ps;
    let ys = &curve.rates;
    let n = xs.len();
    if n < 5 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let edge = (n / 20).max(1);
    let baseline =
        (ys[..edge].iter().sum::<f64>() + ys[n - edge..].iter().sum::<f64>()) / (2 * edge) as f64;
    let (k_min, &y_min) = ys
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if !(baseline > 0.0) || y_min >= baseline {
        return Err(MetricsError::NoDip);
    }
    let visibility = (1.0 - y_min / baseline).clamp(0.0, 1.0);
    let half = 0.5 * (baseline + y_min);
    let spline = CubicSpline::new(xs, ys).ok_or(MetricsError::TooFewPoints(n))?;

    // Crossings are sample pairs (k, k+1) with the level between them.
    let crosses = |k: usize| (ys[k] - half) * (ys[k + 1] - half) <= 0.0 && ys[k] != ys[k + 1];
    let left: Vec<usize> = (0..k_min).filter(|&k| crosses(k)).collect();
    let right: Vec<usize> = (k_min..n - 1).filter(|&k| crosses(k)).collect();
    let outer_left = *left.first().ok_or(MetricsError::NotBracketed("left"))?;
    let outer_right = *right.last().ok_or(MetricsError::NotBracketed("right"))?;
    let non_monotone = left.len() > 1 || right.len() > 1;

    let x_left = bisect(&spline, xs[outer_left], xs[outer_left + 1], half);
    let x_right = bisect(&spline, xs[outer_right], xs[outer_right + 1], half);
    if non_monotone {
        log::warn!("dip flanks cross the half level more than once; using the widest pair");
    }
    Ok(DipMetrics {
        visibility,
        fwhm_ps: x_right - x_left,
        center_ps: xs[k_min],
        baseline,
        non_monotone,
    })
}

fn bisect(spline: &CubicSpline, mut a: f64, mut b: f64, level: f64) -> f64 {
    let mut fa = spline.eval(a) - level;
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = spline.eval(m) - level;
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
