use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};
use crate::trajectory::MotionPoly;

use super::model::cost_and_grad;
use super::Observation;

/// Adam hyperparameters. Step sizes apply to the normalized-basis coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub rho1: f64,
    pub rho2: f64,
    /// Angle block step (rad).
    pub eta_alpha: f64,
    /// Range block step (m).
    pub eta_beta: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            rho1: 0.9,
            rho2: 0.999,
            eta_alpha: 3e-4,
            eta_beta: 1e-4,
            epsilon: 1e-12,
            max_iters: 120,
            rel_tol: 1e-6,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.rho1) || !unit(self.rho2) {
            return Err(Error::config("adam decay factors must lie in (0, 1)"));
        }
        if !(self.eta_alpha > 0.0 && self.eta_beta > 0.0 && self.epsilon >= 0.0 && self.rel_tol >= 0.0) {
            return Err(Error::config("adam step sizes must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("adam max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Moment estimates for the two parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub n_alpha: usize,
    pub iteration: u32,
}

impl AdamState {
    pub fn new(n_alpha: usize, n_beta: usize) -> Self {
        AdamState { m: vec![0.0; n_alpha + n_beta], v: vec![0.0; n_alpha + n_beta], n_alpha, iteration: 0 }
    }

    /// Advances the moments with `grad` and returns the parameter increment.
    pub fn step(&mut self, cfg: &AdamConfig, grad: &[f64]) -> Vec<f64> {
        self.iteration += 1;
        let b1 = 1.0 - cfg.rho1.powi(self.iteration as i32);
        let b2 = 1.0 - cfg.rho2.powi(self.iteration as i32);
        let mut delta = Vec::with_capacity(grad.len());
        for (i, &g) in grad.iter().enumerate() {
            self.m[i] = cfg.rho1 * self.m[i] + (1.0 - cfg.rho1) * g;
            self.v[i] = cfg.rho2 * self.v[i] + (1.0 - cfg.rho2) * g * g;
            let m_hat = self.m[i] / b1;
            let v_hat = self.v[i] / b2;
            let eta = if i < self.n_alpha { cfg.eta_alpha } else { cfg.eta_beta };
            delta.push(-eta * m_hat / (v_hat.sqrt() + cfg.epsilon));
        }
        delta
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost at every evaluated iterate, starting with the initial model.
    pub cost_trace: Vec<f64>,
}

impl FitDiagnostics {
    /// Writes `iteration,cost` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "cost"])?;
        for (i, c) in self.cost_trace.iter().enumerate() {
            w.write_record([i.to_string(), format!("{c:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimizes the window cost from `initial` and returns the lowest-cost iterate.
pub fn adam_fit(
    initial: &MotionPoly,
    geom: &ArrayGeometry,
    window: &[Observation],
    cfg: &AdamConfig,
) -> (MotionPoly, FitDiagnostics) {
    let mut current = initial.clone();
    let mut params = current.params();
    let mut state = AdamState::new(current.alpha().len(), current.beta().len());
    let (mut j, mut g) = cost_and_grad(&current, geom, window);
    let mut diag = FitDiagnostics { initial_cost: j, final_cost: j, cost_trace: vec![j], ..Default::default() };
    let mut best = (j, params.clone());
    if j == 0.0 || window.is_empty() {
        diag.converged = true;
        return (current, diag);
    }
    for _ in 0..cfg.max_iters {
        let delta = state.step(cfg, &g);
        for (p, d) in params.iter_mut().zip(&delta) {
            *p += d;
        }
        current.set_params(&params);
        let prev = j;
        (j, g) = cost_and_grad(&current, geom, window);
        diag.iterations += 1;
        diag.cost_trace.push(j);
        if j < best.0 {
            best = (j, params.clone());
        }
        if (j - prev).abs() / prev.max(1e-30) < cfg.rel_tol {
            diag.converged = true;
            break;
        }
    }
    current.set_params(&best.1);
    diag.final_cost = best.0;
    (current, diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::cost;
    use crate::estimator::testutil::{geometry, truth, window};

    #[test]
    fn first_step_is_signed_learning_rate() {
        let cfg = AdamConfig { epsilon: 1e-8, ..AdamConfig::default() };
        let g = [0.5, -2e-3, 0.0, 7.0];
        let mut s = AdamState::new(2, 2);
        let d = s.step(&cfg, &g);
        // m̂ = g and v̂ = g² after bias correction.
        let want = [
            -cfg.eta_alpha * 0.5 / (0.5 + 1e-8),
            cfg.eta_alpha * 2e-3 / (2e-3 + 1e-8),
            0.0,
            -cfg.eta_beta * 7.0 / (7.0 + 1e-8),
        ];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-300), "{a} vs {b}");
        }
        #[allow(clippy::needless_range_loop)]
        for i in 0..4 {
            assert!((s.m[i] - 0.1 * g[i]).abs() <= 1e-15 * g[i].abs());
            assert!((s.v[i] - 1e-3 * g[i] * g[i]).abs() < 1e-15 * g[i] * g[i] + 1e-300);
        }
    }

    #[test]
    fn second_step_uses_bias_corrected_moments() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(1, 0);
        s.step(&cfg, &[1.0]);
        let d = s.step(&cfg, &[3.0])[0];
        let m = 0.9 * 0.1 + 0.1 * 3.0;
        let v = 0.999 * 0.001 + 0.001 * 9.0;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64 * 0.999);
        let want = -cfg.eta_alpha * m_hat / (v_hat.sqrt() + cfg.epsilon);
        assert!((d - want).abs() < 1e-15 * want.abs());
    }

    #[test]
    fn returns_the_best_iterate() {
        let geom = geometry(64);
        let obs = window(&truth(), &geom, 200, 4e-6, 1);
        let mut start = truth();
        let mut p = start.params();
        p[0] += 2e-3;
        start.set_params(&p);
        let cfg = AdamConfig { max_iters: 40, ..AdamConfig::default() };
        let (fit, d) = adam_fit(&start, &geom, &obs, &cfg);
        let min = d.cost_trace.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(d.final_cost, min);
        assert_eq!(cost(&fit, &geom, &obs), d.final_cost);
        assert!(d.final_cost < d.initial_cost);
        assert_eq!(d.cost_trace.len(), d.iterations + 1);
    }

    #[test]
    fn empty_window_is_a_no_op() {
        let geom = geometry(8);
        let (fit, d) = adam_fit(&truth(), &geom, &[], &AdamConfig::default());
        assert_eq!(fit, truth());
        assert!(d.converged);
        assert_eq!(d.iterations, 0);
    }

    #[test]
    fn config_checks() {
        assert!(AdamConfig::default().validate().is_ok());
        assert!(AdamConfig { rho1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { eta_beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { max_iters: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn cost_trace_csv() {
        let d = FitDiagnostics { cost_trace: vec![2.0, 1.0], ..Default::default() };
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,cost\n0,2e0\n1,1e0\n");
    }
}
