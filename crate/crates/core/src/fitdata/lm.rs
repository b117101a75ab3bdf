use nalgebra::{DMatrix, DVector};

/// Damped Gauss–Newton with Marquardt scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub max_iterations: usize,
    /// Bound on the largest cosine between the residual vector and a
    /// Jacobian column at convergence.
    pub gradient_tolerance: f64,
    /// Objective below this multiple of Σ(y/σ)² counts as an exact fit.
    pub exact_fit_floor: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            initial_damping: 1e-3,
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            exact_fit_floor: 1e-28,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_cosine: f64,
    /// Objective after the starting point and after every accepted step.
    pub history: Vec<f64>,
}

pub trait LeastSquares {
    /// Weighted residuals (model − data)/σ.
    fn residuals(&self, params: &[f64]) -> Option<DVector<f64>>;
    fn jacobian(&self, params: &[f64]) -> Option<DMatrix<f64>>;
    /// Σ(y/σ)², the scale for the exact-fit test.
    fn data_norm(&self) -> f64;
}

fn gradient_cosine(j: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = j.transpose() * r;
    (0..j.ncols())
        .map(|c| {
            let cn = j.column(c).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[c].abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

pub fn minimize(problem: &dyn LeastSquares, start: &[f64], opts: &LmOptions) -> LmOutcome {
    let mut x = DVector::from_column_slice(start);
    let mut r = problem
        .residuals(x.as_slice())
        .expect("residuals defined at the starting point");
    let mut objective = r.norm_squared();
    let floor = opts.exact_fit_floor * problem.data_norm();
    let mut damping = opts.initial_damping;
    let mut history = vec![objective];
    let mut iterations = 0;
    let mut cosine = f64::INFINITY;
    let mut converged = false;

    while iterations < opts.max_iterations {
        if objective <= floor {
            converged = true;
            cosine = 0.0;
            break;
        }
        let Some(j) = problem.jacobian(x.as_slice()) else {
            break;
        };
        cosine = gradient_cosine(&j, &r);
        if cosine <= opts.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while damping < 1e20 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += damping * jtj[(k, k)].max(diag_floor);
            }
            let step = a.cholesky().map(|c| c.solve(&(-&g)));
            if let Some(step) = step {
                let trial = &x + &step;
                if let Some(rt) = problem.residuals(trial.as_slice()) {
                    let obj = rt.norm_squared();
                    if obj.is_finite() && obj < objective {
                        x = trial;
                        r = rt;
                        objective = obj;
                        damping = (damping / 10.0).max(1e-15);
                        accepted = true;
                        break;
                    }
                }
            }
            damping *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary to rounding
            if let Some(j) = problem.jacobian(x.as_slice()) {
                cosine = gradient_cosine(&j, &r);
            }
            converged = cosine <= opts.gradient_tolerance.sqrt();
            break;
        }
        history.push(objective);
    }
    LmOutcome {
        params: x.as_slice().to_vec(),
        objective,
        iterations,
        converged,
        gradient_cosine: cosine,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exponential {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for Exponential {
        fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
            Some(DVector::from_iterator(
                self.t.len(),
                self.t
                    .iter()
                    .zip(&self.y)
                    .map(|(t, y)| p[0] * (-p[1] * t).exp() - y),
            ))
        }
        fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_fn(self.t.len(), 2, |i, c| {
                let e = (-p[1] * self.t[i]).exp();
                if c == 0 {
                    e
                } else {
                    -p[0] * self.t[i] * e
                }
            }))
        }
        fn data_norm(&self) -> f64 {
            self.y.iter().map(|y| y * y).sum()
        }
    }

    #[test]
    fn recovers_exponential_and_never_increases() {
        let t: Vec<f64> = (0..30).map(|k| k as f64 * 0.2).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let p = Exponential { t, y };
        let out = minimize(&p, &[1.0, 2.0], &LmOptions::default());
        assert!(out.converged);
        assert!((out.params[0] - 3.0).abs() < 1e-10);
        assert!((out.params[1] - 0.7).abs() < 1e-10);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
