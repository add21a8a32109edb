//! Cubic interpolating splines (second-derivative form).

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

enum EndCondition {
    Natural,
    Clamped(f64, f64),
}

impl CubicSpline {
    pub fn natural(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self::build(x, y, EndCondition::Natural)
    }

    /// Spline with prescribed end slopes.
    pub fn clamped(x: Vec<f64>, y: Vec<f64>, start_slope: f64, end_slope: f64) -> Self {
        Self::build(x, y, EndCondition::Clamped(start_slope, end_slope))
    }

    fn build(x: Vec<f64>, y: Vec<f64>, end: EndCondition) -> Self {
        let n = x.len();
        assert!(n >= 2 && n == y.len(), "spline needs at least two matching knots");
        debug_assert!(x.windows(2).all(|w| w[1] > w[0]));
        // Tridiagonal system for the knot second derivatives.
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            sub[i] = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            sup[i] = h1 / 6.0;
            rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        match end {
            EndCondition::Natural => {
                diag[0] = 1.0;
                diag[n - 1] = 1.0;
            }
            EndCondition::Clamped(s0, s1) => {
                let h0 = x[1] - x[0];
                diag[0] = h0 / 3.0;
                sup[0] = h0 / 6.0;
                rhs[0] = (y[1] - y[0]) / h0 - s0;
                let hn = x[n - 1] - x[n - 2];
                sub[n - 1] = hn / 6.0;
                diag[n - 1] = hn / 3.0;
                rhs[n - 1] = s1 - (y[n - 1] - y[n - 2]) / hn;
            }
        }
        // Thomas algorithm.
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Self { x, y, m }
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.x.len();
        self.x.partition_point(|&k| k <= t).saturating_sub(1).min(n - 2)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    #[cfg(test)]
    pub fn second_derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.m[i] + b * self.m[i + 1]
    }
}
