//! Sliding-window maximum-likelihood fitting of the motion polynomials.

mod acquire;
mod adam;
mod fisher;
mod lm;
mod model;
#[cfg(test)]
pub(crate) mod testutil;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ArrayGeometry;
use crate::trajectory::MotionPoly;

pub use acquire::{acquire_phase, resolve_cycles};
pub use adam::{adam_fit, AdamConfig, AdamState, FitDiagnostics};
pub use fisher::{observed_fim, posterior, regularizer, PosteriorBelief};
pub use lm::lm_fit;
pub use model::{cost, cost_and_grad, grad, mu_at, mu_terms, predict_mu, residuals, MuTerms};

/// One fed-back sample: the beam used for symbol `index` at global time
/// `time` and the complex value the user received.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub index: u64,
    pub time: f64,
    pub beam: Vec<Complex64>,
    pub received: Complex64,
}

/// Which minimizer refits the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Damped Gauss-Newton. Converges in far fewer passes over the window.
    LevenbergMarquardt,
}

/// Iteration cap of the Levenberg–Marquardt refits.
const LM_MAX_ITERS: usize = 50;

/// Minimizes the window cost from `initial` with the chosen optimizer.
pub fn fit(
    initial: &MotionPoly,
    geom: &ArrayGeometry,
    window: &[Observation],
    optimizer: Optimizer,
    adam: &AdamConfig,
) -> (MotionPoly, FitDiagnostics) {
    match optimizer {
        Optimizer::Adam => adam_fit(initial, geom, window, adam),
        Optimizer::LevenbergMarquardt => lm_fit(initial, geom, window, LM_MAX_ITERS, adam.rel_tol),
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::{geometry, truth, window};
    use super::*;
    use crate::channel::PolarState;
    use crate::trajectory::ClampBounds;

    fn offset(model: &MotionPoly, d_theta: f64, d_r: f64) -> MotionPoly {
        let mut m = model.clone();
        let mut p = m.params();
        p[0] += d_theta;
        p[m.alpha().len()] += d_r;
        m.set_params(&p);
        m
    }

    fn worst_error(fit: &MotionPoly, geom: &ArrayGeometry, times: &[f64]) -> (f64, f64) {
        let b = ClampBounds::for_geometry(geom);
        times.iter().fold((0.0f64, 0.0f64), |(a, r), &t| {
            let x: PolarState = fit.poly_eval(t, &b);
            let y = truth().poly_eval(t, &b);
            (a.max((x.theta - y.theta).abs()), r.max((x.r - y.r).abs()))
        })
    }

    /// Phase lock, cycle resolution and a refit recover the motion from
    /// noiseless samples several wavelengths off.
    #[test]
    fn noiseless_recovery() {
        let geom = geometry(64);
        let obs = window(&truth(), &geom, 600, 0.0, 21);
        let energy: f64 = obs.iter().map(|o| o.received.norm_sqr()).sum();
        let start = offset(&truth(), 2e-3, 3.3 * geom.wavelength());
        let adam = AdamConfig { max_iters: 200, rel_tol: 0.0, ..AdamConfig::default() };
        let (coarse, _) = fit(&acquire_phase(&start, &geom, &obs), &geom, &obs, Optimizer::LevenbergMarquardt, &adam);
        let resolved = acquire_phase(&resolve_cycles(&coarse, &geom, &obs, 0.1), &geom, &obs);
        let (model, d) = fit(&resolved, &geom, &obs, Optimizer::LevenbergMarquardt, &adam);
        assert!(d.final_cost < 1e-12 * energy, "J = {:e} of {:e}", d.final_cost, energy);
        let times: Vec<f64> = obs.iter().map(|o| o.time).collect();
        let (da, dr) = worst_error(&model, &geom, &times);
        assert!(da < 1e-3 && dr < 0.05, "angle {da} range {dr}");
    }

    #[test]
    fn phase_acquisition_removes_a_sub_wavelength_offset() {
        let geom = geometry(64);
        let obs = window(&truth(), &geom, 300, 0.0, 4);
        let lambda = geom.wavelength();
        for frac in [-0.45, -0.2, 0.1, 0.3, 0.45] {
            let locked = acquire_phase(&offset(&truth(), 0.0, frac * lambda), &geom, &obs);
            let err = locked.beta()[0] - truth().beta()[0];
            assert!(err.abs() < 0.02 * lambda, "offset {frac}λ left {}λ", err / lambda);
        }
    }

    #[test]
    fn cycle_resolution_finds_the_right_wavelength() {
        let geom = geometry(64);
        let obs = window(&truth(), &geom, 300, 0.0, 4);
        let lambda = geom.wavelength();
        for n in [-7, -2, 0, 3, 11] {
            let m = resolve_cycles(&offset(&truth(), 0.0, n as f64 * lambda), &geom, &obs, 12.0 * lambda);
            assert!((m.beta()[0] - truth().beta()[0]).abs() < 1e-9, "{n}");
        }
    }

    #[test]
    fn both_optimizers_descend_on_noisy_data() {
        let geom = geometry(64);
        let obs = window(&truth(), &geom, 400, 4e-6, 2);
        let start = offset(&truth(), 1e-3, 0.0);
        for opt in [Optimizer::Adam, Optimizer::LevenbergMarquardt] {
            let (m, d) = fit(&start, &geom, &obs, opt, &AdamConfig::default());
            assert!(d.final_cost < d.initial_cost, "{opt:?}");
            let times: Vec<f64> = obs.iter().map(|o| o.time).collect();
            let (da, _) = worst_error(&m, &geom, &times);
            // A tenth of a beamwidth.
            assert!(da < 0.2 / geom.num_elements() as f64, "{opt:?}: angle error {da}");
            // Noise floor: about one noise power per sample.
            assert!(d.final_cost < 1.5 * obs.len() as f64 * 2.0 * 16e-12, "{opt:?}");
        }
    }
}

