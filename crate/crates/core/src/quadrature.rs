//! Error-controlled integration of complex-valued integrands on finite boxes.
//!
//! One and two dimensional integrals use a global adaptive Gauss–Kronrod
//! (7/15) scheme: the panel with the largest error estimate is bisected until
//! the summed estimate drops below `max(abs_tol, rel_tol·|I|)`. Four
//! dimensional integrals use a tensor product of composite Gauss–Legendre
//! rules. Nothing here is randomized and every reduction runs in a fixed
//! order, so repeated calls are bit-identical.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Estimated integral and its absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Complex64,
    pub error: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("invalid quadrature settings: {0}")]
    InvalidSettings(String),
    #[error("invalid integration interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("integrand returned a non-finite value at {at:?}")]
    NonFinite { at: Vec<f64> },
    #[error(
        "no convergence after {subdivisions} subdivisions: estimate {} with error {}",
        .best.value, .best.error
    )]
    NotConverged { best: Estimate, subdivisions: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    /// Adaptive bisection with a nested 7/15-point Gauss–Kronrod pair.
    AdaptiveKronrod,
    /// Fixed tensor Gauss–Legendre rule with `order` points per axis.
    GaussLegendre { order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub rule: Rule,
    /// Infinite frequency axes are cut at ± this many widths.
    pub truncation_sigmas: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            rel_tol: 1e-7,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
            rule: Rule::AdaptiveKronrod,
            truncation_sigmas: 6.0,
        }
    }
}

impl QuadratureSettings {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        QuadratureSettings {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        let bad = |m: &str| Err(QuadratureError::InvalidSettings(m.to_string()));
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol must be positive");
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol must be positive");
        }
        if self.max_subdivisions < 1 {
            return bad("max_subdivisions must be at least 1");
        }
        if !(self.truncation_sigmas > 0.0 && self.truncation_sigmas.is_finite()) {
            return bad("truncation_sigmas must be positive");
        }
        if let Rule::GaussLegendre { order } = self.rule {
            if order < 2 {
                return bad("Gauss-Legendre order must be at least 2");
            }
        }
        Ok(())
    }

    fn target(&self, value: Complex64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.norm())
    }
}

#[allow(clippy::excessive_precision)]
// Positive Kronrod abscissae of the 15-point rule; even indices are the 7-point Gauss nodes.
const XK: [f64; 8] = [
    0.0,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.991_455_371_120_812_639_206_854_697_526_329,
];
#[allow(clippy::excessive_precision)]
const WK: [f64; 8] = [
    0.209_482_141_084_727_828_012_999_174_891_714,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.022_935_322_010_529_224_963_732_008_058_970,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.417_959_183_673_469_387_755_102_040_816_327,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.129_484_966_168_869_693_270_611_432_679_082,
];

/// The 15 Kronrod nodes on [-1, 1] in increasing order with Kronrod and Gauss weights
/// (Gauss weight is zero on Kronrod-only nodes).
fn kronrod_table() -> [(f64, f64, f64); 15] {
    let mut table = [(0.0, 0.0, 0.0); 15];
    for (slot, entry) in table.iter_mut().enumerate() {
        let signed = slot as i64 - 7;
        let k = signed.unsigned_abs() as usize;
        let x = if signed < 0 { -XK[k] } else { XK[k] };
        let wg = if k.is_multiple_of(2) { WG[k / 2] } else { 0.0 };
        *entry = (x, WK[k], wg);
    }
    table
}

fn check_interval(lo: f64, hi: f64) -> Result<(), QuadratureError> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(QuadratureError::InvalidInterval { lo, hi })
    }
}

fn checked(value: Complex64, at: &[f64]) -> Result<Complex64, QuadratureError> {
    if value.re.is_finite() && value.im.is_finite() {
        Ok(value)
    } else {
        Err(QuadratureError::NonFinite { at: at.to_vec() })
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the three-term Legendre recurrence.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on one axis: `panels` equal panels of `order` points each.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisRule {
    pub fn composite(lo: f64, hi: f64, order: usize, panels: usize) -> Self {
        let base = GaussLegendre::new(order);
        Self::from_base(&base, lo, hi, panels)
    }

    pub fn from_base(base: &GaussLegendre, lo: f64, hi: f64, panels: usize) -> Self {
        let panels = panels.max(1);
        let width = (hi - lo) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * base.nodes.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for p in 0..panels {
            let a = lo + width * p as f64;
            let half = 0.5 * width;
            let mid = a + half;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        AxisRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(Complex64::new(0.0, 0.0), |acc, (&x, &w)| acc + f(x) * w)
    }
}

struct Panel1 {
    lo: f64,
    hi: f64,
    value: Complex64,
    error: f64,
    splittable: bool,
}

fn kronrod_1d<F: Fn(f64) -> Complex64>(
    f: &F,
    table: &[(f64, f64, f64); 15],
    lo: f64,
    hi: f64,
) -> Result<(Complex64, f64), QuadratureError> {
    let half = 0.5 * (hi - lo);
    let mid = lo + half;
    let mut k = Complex64::new(0.0, 0.0);
    let mut g = Complex64::new(0.0, 0.0);
    for &(x, wk, wg) in table {
        let at = mid + half * x;
        let v = checked(f(at), &[at])?;
        k += v * wk;
        g += v * wg;
    }
    Ok((k * half, ((k - g) * half).norm()))
}

fn splittable(lo: f64, hi: f64) -> bool {
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    hi - lo > 64.0 * f64::EPSILON * scale
}

/// Integrates `f` over `[lo, hi]`.
pub fn integrate_1d<F>(
    f: F,
    lo: f64,
    hi: f64,
    settings: &QuadratureSettings,
) -> Result<Estimate, QuadratureError>
where
    F: Fn(f64) -> Complex64,
{
    settings.validate()?;
    check_interval(lo, hi)?;
    if lo == hi {
        return Ok(Estimate {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        });
    }
    if let Rule::GaussLegendre { order } = settings.rule {
        let fine = AxisRule::composite(lo, hi, order, 1);
        let coarse = AxisRule::composite(lo, hi, order.div_ceil(2), 1);
        let value = checked(fine.integrate(&f), &[lo, hi])?;
        let error = (value - coarse.integrate(&f)).norm();
        return Ok(Estimate { value, error });
    }

    let table = kronrod_table();
    let (value, error) = kronrod_1d(&f, &table, lo, hi)?;
    let mut panels = vec![Panel1 {
        lo,
        hi,
        value,
        error,
        splittable: splittable(lo, hi),
    }];
    loop {
        let total: Complex64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if error <= settings.target(total) {
            return Ok(Estimate {
                value: total,
                error,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.splittable)
            .fold(None, |best: Option<(usize, f64)>, (i, p)| match best {
                Some((_, e)) if e >= p.error => best,
                _ => Some((i, p.error)),
            });
        let Some((index, _)) = worst else {
            return Err(QuadratureError::NotConverged {
                best: Estimate {
                    value: total,
                    error,
                },
                subdivisions: panels.len(),
            });
        };
        if panels.len() >= settings.max_subdivisions {
            return Err(QuadratureError::NotConverged {
                best: Estimate {
                    value: total,
                    error,
                },
                subdivisions: panels.len(),
            });
        }
        let (a, b) = (panels[index].lo, panels[index].hi);
        let m = 0.5 * (a + b);
        let (lv, le) = kronrod_1d(&f, &table, a, m)?;
        let (rv, re) = kronrod_1d(&f, &table, m, b)?;
        panels[index] = Panel1 {
            lo: a,
            hi: m,
            value: lv,
            error: le,
            splittable: splittable(a, m),
        };
        panels.push(Panel1 {
            lo: m,
            hi: b,
            value: rv,
            error: re,
            splittable: splittable(m, b),
        });
    }
}

struct Panel2 {
    x: (f64, f64),
    y: (f64, f64),
    value: Complex64,
    err_x: f64,
    err_y: f64,
}

impl Panel2 {
    fn error(&self) -> f64 {
        self.err_x + self.err_y
    }
}

fn kronrod_2d<F: Fn(f64, f64) -> Complex64>(
    f: &F,
    table: &[(f64, f64, f64); 15],
    x: (f64, f64),
    y: (f64, f64),
) -> Result<Panel2, QuadratureError> {
    let hx = 0.5 * (x.1 - x.0);
    let hy = 0.5 * (y.1 - y.0);
    let mx = x.0 + hx;
    let my = y.0 + hy;
    let zero = Complex64::new(0.0, 0.0);
    let (mut kk, mut gk, mut kg) = (zero, zero, zero);
    for &(tx, wkx, wgx) in table {
        let px = mx + hx * tx;
        let (mut row_k, mut row_g) = (zero, zero);
        for &(ty, wky, wgy) in table {
            let py = my + hy * ty;
            let v = checked(f(px, py), &[px, py])?;
            row_k += v * wky;
            row_g += v * wgy;
        }
        kk += row_k * wkx;
        gk += row_k * wgx;
        kg += row_g * wkx;
    }
    let scale = hx * hy;
    Ok(Panel2 {
        x,
        y,
        value: kk * scale,
        err_x: ((kk - gk) * scale).norm(),
        err_y: ((kk - kg) * scale).norm(),
    })
}

/// Integrates `f(x, y)` over the rectangle `x ∈ [x.0, x.1]`, `y ∈ [y.0, y.1]`.
pub fn integrate_2d<F>(
    f: F,
    x: (f64, f64),
    y: (f64, f64),
    settings: &QuadratureSettings,
) -> Result<Estimate, QuadratureError>
where
    F: Fn(f64, f64) -> Complex64,
{
    settings.validate()?;
    check_interval(x.0, x.1)?;
    check_interval(y.0, y.1)?;
    if x.0 == x.1 || y.0 == y.1 {
        return Ok(Estimate {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        });
    }
    if let Rule::GaussLegendre { order } = settings.rule {
        let fine_x = AxisRule::composite(x.0, x.1, order, 1);
        let fine_y = AxisRule::composite(y.0, y.1, order, 1);
        let coarse_x = AxisRule::composite(x.0, x.1, order.div_ceil(2), 1);
        let coarse_y = AxisRule::composite(y.0, y.1, order.div_ceil(2), 1);
        let value = fine_x.integrate(|a| fine_y.integrate(|b| f(a, b)));
        let value = checked(value, &[x.0, x.1, y.0, y.1])?;
        let coarse = coarse_x.integrate(|a| coarse_y.integrate(|b| f(a, b)));
        return Ok(Estimate {
            value,
            error: (value - coarse).norm(),
        });
    }

    let table = kronrod_table();
    let mut panels = vec![kronrod_2d(&f, &table, x, y)?];
    loop {
        let total: Complex64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(Panel2::error).sum();
        if error <= settings.target(total) {
            return Ok(Estimate {
                value: total,
                error,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| splittable(p.x.0, p.x.1) || splittable(p.y.0, p.y.1))
            .fold(None, |best: Option<(usize, f64)>, (i, p)| match best {
                Some((_, e)) if e >= p.error() => best,
                _ => Some((i, p.error())),
            });
        let (Some((index, _)), true) = (worst, panels.len() < settings.max_subdivisions) else {
            return Err(QuadratureError::NotConverged {
                best: Estimate {
                    value: total,
                    error,
                },
                subdivisions: panels.len(),
            });
        };
        let p = &panels[index];
        let split_x = (p.err_x >= p.err_y && splittable(p.x.0, p.x.1)) || !splittable(p.y.0, p.y.1);
        let (first, second) = if split_x {
            let m = 0.5 * (p.x.0 + p.x.1);
            ((p.x.0, m), (m, p.x.1))
        } else {
            let m = 0.5 * (p.y.0 + p.y.1);
            ((p.y.0, m), (m, p.y.1))
        };
        let (px, py) = (p.x, p.y);
        let (a, b) = if split_x {
            (
                kronrod_2d(&f, &table, first, py)?,
                kronrod_2d(&f, &table, second, py)?,
            )
        } else {
            (
                kronrod_2d(&f, &table, px, first)?,
                kronrod_2d(&f, &table, px, second)?,
            )
        };
        panels[index] = a;
        panels.push(b);
    }
}

fn tensor_4d<F>(f: &F, axes: &[AxisRule; 4]) -> Complex64
where
    F: Fn([f64; 4]) -> Complex64 + Sync,
{
    let partial: Vec<Complex64> = axes[0]
        .nodes
        .par_iter()
        .zip(axes[0].weights.par_iter())
        .map(|(&a, &wa)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (&b, &wb) in axes[1].nodes.iter().zip(&axes[1].weights) {
                for (&c, &wc) in axes[2].nodes.iter().zip(&axes[2].weights) {
                    let mut inner = Complex64::new(0.0, 0.0);
                    for (&d, &wd) in axes[3].nodes.iter().zip(&axes[3].weights) {
                        inner += f([a, b, c, d]) * wd;
                    }
                    acc += inner * (wb * wc);
                }
            }
            acc * wa
        })
        .collect();
    partial.into_iter().sum()
}

fn coarse_order(order: usize) -> usize {
    (3 * order / 4).max(1)
}

/// Default points per axis for 4-D integrals when `settings.rule` is adaptive.
pub const DEFAULT_TENSOR_ORDER: usize = 48;

/// Integrates `f` over a 4-D box with a tensor Gauss–Legendre rule.
///
/// The error estimate compares against the rule of three quarters the order.
pub fn integrate_4d<F>(
    f: F,
    bounds: [(f64, f64); 4],
    settings: &QuadratureSettings,
) -> Result<Estimate, QuadratureError>
where
    F: Fn([f64; 4]) -> Complex64 + Sync,
{
    settings.validate()?;
    for &(lo, hi) in &bounds {
        check_interval(lo, hi)?;
    }
    let order = match settings.rule {
        Rule::GaussLegendre { order } => order,
        Rule::AdaptiveKronrod => DEFAULT_TENSOR_ORDER,
    };
    let build = |n: usize| {
        let base = GaussLegendre::new(n);
        bounds.map(|(lo, hi)| AxisRule::from_base(&base, lo, hi, 1))
    };
    let value = tensor_4d(&f, &build(order));
    let value = checked(
        value,
        &bounds.iter().flat_map(|b| [b.0, b.1]).collect::<Vec<_>>(),
    )?;
    let coarse = tensor_4d(&f, &build(coarse_order(order)));
    let error = (value - coarse).norm();
    if error > settings.target(value) {
        return Err(QuadratureError::NotConverged {
            best: Estimate { value, error },
            subdivisions: 1,
        });
    }
    Ok(Estimate { value, error })
}
