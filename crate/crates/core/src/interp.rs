//! Natural cubic spline through tabulated points.

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    /// `xs` must be strictly increasing and at least two points long.
    pub fn new(xs: &[f64], ys: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n || xs.windows(2).any(|w| !(w[0] < w[1])) {
            return None;
        }
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations, natural ends.
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i] = 2.0 * (h0 + h1);
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
                if i > 1 {
                    let m = h0 / diag[i - 1];
                    diag[i] -= m * h0;
                    rhs[i] -= m * rhs[i - 1];
                }
            }
            for i in (1..n - 1).rev() {
                let h1 = xs[i + 1] - xs[i];
                let upper = if i + 1 < n - 1 {
                    h1 * second[i + 1]
                } else {
                    0.0
                };
                second[i] = (rhs[i] - upper) / diag[i];
            }
        }
        Some(CubicSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            second,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Evaluates the spline; outside the domain the end segments are extended.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[k]
            + b * self.ys[k + 1]
            + ((a * a * a - a) * self.second[k] + (b * b * b - b) * self.second[k + 1]) * h * h
                / 6.0
    }
}
