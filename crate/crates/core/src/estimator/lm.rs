//! Levenberg–Marquardt on the same cost, an alternative to Adam.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::ArrayGeometry;
use crate::trajectory::{ClampBounds, MotionPoly};

use super::adam::FitDiagnostics;
use super::model::{chunk_terms, cost, CHUNK};
use super::Observation;

/// Cost, gradient and Gauss-Newton matrix `2 Σ Re{∂μᴴ ∂μ}` over `[α; β]`.
pub(crate) fn gauss_newton_system(
    model: &MotionPoly,
    geom: &ArrayGeometry,
    window: &[Observation],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let bounds = ClampBounds::for_geometry(geom);
    let na = model.alpha().len();
    let nb = model.beta().len();
    let nm = 2 * na.max(nb) - 1;
    // Per chunk: cost, gradient, moments of |dθ|², |dr|², Re{dθ* dr}.
    let partials: Vec<(f64, Vec<f64>, [Vec<f64>; 3])> = window
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut j = 0.0;
            let mut g = vec![0.0; na + nb];
            let mut mom = [vec![0.0; nm], vec![0.0; nm], vec![0.0; nm]];
            for o in chunk_terms(model, geom, &bounds, chunk) {
                let (e, tau) = (o.residual, o.tau);
                j += e.norm_sqr();
                let dt = if o.flags.theta { Default::default() } else { o.terms.d_theta };
                let dr = if o.flags.r { Default::default() } else { o.terms.d_r };
                let gt = -2.0 * (e.conj() * dt).re;
                let gr = -2.0 * (e.conj() * dr).re;
                let vals = [dt.norm_sqr(), dr.norm_sqr(), (dt.conj() * dr).re];
                let mut p = 1.0;
                for i in 0..nm {
                    if i < na {
                        g[i] += gt * p;
                    }
                    if i < nb {
                        g[na + i] += gr * p;
                    }
                    for (m, v) in mom.iter_mut().zip(vals) {
                        m[i] += v * p;
                    }
                    p *= tau;
                }
            }
            (j, g, mom)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = DVector::zeros(na + nb);
    let mut mom = [vec![0.0; nm], vec![0.0; nm], vec![0.0; nm]];
    for (j, g, m) in partials {
        total += j;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
        for (acc, part) in mom.iter_mut().zip(m) {
            acc.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
    }
    let h = DMatrix::from_fn(na + nb, na + nb, |r, c| {
        let v = match (r < na, c < na) {
            (true, true) => mom[0][r + c],
            (false, false) => mom[1][(r - na) + (c - na)],
            (true, false) => mom[2][r + (c - na)],
            (false, true) => mom[2][(r - na) + c],
        };
        2.0 * v
    });
    (total, grad, h)
}

/// Damped Gauss-Newton iterations; returns the lowest-cost iterate.
pub fn lm_fit(initial: &MotionPoly, geom: &ArrayGeometry, window: &[Observation], max_iters: usize, rel_tol: f64) -> (MotionPoly, FitDiagnostics) {
    let mut current = initial.clone();
    let (mut j, mut g, mut h) = gauss_newton_system(&current, geom, window);
    let mut diag = FitDiagnostics { initial_cost: j, final_cost: j, cost_trace: vec![j], ..Default::default() };
    if j == 0.0 || window.is_empty() {
        diag.converged = true;
        return (current, diag);
    }
    let mut lambda = 1e-3;
    for _ in 0..max_iters {
        let n = h.nrows();
        let mut a = h.clone();
        for i in 0..n {
            a[(i, i)] += lambda * h[(i, i)].max(1e-300);
        }
        let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial = current.clone();
        let p: Vec<f64> = current.params().iter().zip(step.iter()).map(|(x, d)| x + d).collect();
        trial.set_params(&p);
        let jt = cost(&trial, geom, window);
        diag.iterations += 1;
        diag.cost_trace.push(jt);
        if jt < j {
            let rel = (j - jt) / j.max(1e-30);
            current = trial;
            (j, g, h) = gauss_newton_system(&current, geom, window);
            lambda = (lambda * 0.3).max(1e-12);
            if rel < rel_tol {
                diag.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                diag.converged = true;
                break;
            }
        }
    }
    diag.final_cost = j;
    (current, diag)
}
