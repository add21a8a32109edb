use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ArrayGeometry;
use crate::trajectory::{ClampBounds, MotionPoly};

use super::model::{cost, mu_at};
use super::Observation;

/// Samples weaker than this fraction of the strongest are skipped while
/// unwrapping; their phase is mostly noise.
const MIN_REL_AMPLITUDE: f64 = 0.2;

/// Locks the range polynomial onto the carrier phase of the window.
///
/// The cost is periodic in range with period λ, so a gradient method started
/// more than a fraction of a wavelength away cannot recover. Here the phase of
/// `y_u μ̂_u*` is unwrapped along time and fitted by a polynomial, which gives
/// the range correction directly. Squaring before unwrapping removes the sign
/// flips of beam sidelobes; the remaining λ/2 ambiguity is settled from the
/// coherent sum. `window` must be sorted by time.
pub fn acquire_phase(model: &MotionPoly, geom: &ArrayGeometry, window: &[Observation]) -> MotionPoly {
    let bounds = ClampBounds::for_geometry(geom);
    let k = geom.wavenumber();
    let z: Vec<(f64, Complex64)> = window
        .iter()
        .map(|obs| {
            let t = model.local_time(obs.time);
            let mu = mu_at(geom, model.poly_eval(t, &bounds), &obs.beam);
            (t / model.time_scale(), obs.received * mu.conj())
        })
        .collect();
    let peak = z.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return model.clone();
    }
    // Squared samples: beam sidelobe sign flips drop out.
    let kept: Vec<(f64, Complex64, f64)> =
        z.iter().filter(|(_, v)| v.norm() >= MIN_REL_AMPLITUDE * peak).map(|&(tau, v)| (tau, v * v, v.norm())).collect();
    let rate = phase_rate(&kept);
    // Unwrap what is left after the dominant rotation, so that gaps left by
    // skipped samples cannot slip a cycle on a fast radial approach.
    let mut taus = Vec::with_capacity(kept.len());
    let mut phases = Vec::with_capacity(kept.len());
    let mut weights = Vec::with_capacity(kept.len());
    let mut prev: Option<f64> = None;
    for &(tau, w, amp) in &kept {
        let raw = (w * Complex64::from_polar(1.0, -rate * tau)).arg();
        let unwrapped = match prev {
            None => raw,
            Some(p) => p + wrap(raw - p),
        };
        prev = Some(unwrapped);
        taus.push(tau);
        phases.push(unwrapped + rate * tau);
        weights.push(amp);
    }
    let mut out = model.clone();
    let degree = model.beta().len().min(taus.len());
    if degree == 0 {
        return out;
    }
    // Weighted least squares for Δr(τ) = φ(τ)/(2k).
    let a = DMatrix::from_fn(taus.len(), degree, |u, i| weights[u] * taus[u].powi(i as i32));
    let b = DVector::from_fn(taus.len(), |u, _| weights[u] * phases[u] / (2.0 * k));
    if let Ok(coef) = a.svd(true, true).solve(&b, 1e-12) {
        for (beta, c) in out.beta_mut().iter_mut().zip(coef.iter()) {
            *beta += c;
        }
    }
    // Residual constant offset, including the λ/2 branch.
    let sum: Complex64 = window
        .iter()
        .map(|obs| {
            let t = out.local_time(obs.time);
            obs.received * mu_at(geom, out.poly_eval(t, &bounds), &obs.beam).conj()
        })
        .sum();
    if sum.norm() > 0.0 {
        out.beta_mut()[0] += sum.arg() / k;
    }
    out
}

/// Dominant rotation rate of `(τ, w, |v|)` samples, per unit `τ`, from
/// products of neighbours at the shortest spacing. Zero with fewer than two
/// samples.
fn phase_rate(samples: &[(f64, Complex64, f64)]) -> f64 {
    let step = samples.windows(2).map(|p| p[1].0 - p[0].0).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    if !step.is_finite() {
        return 0.0;
    }
    let (mut sum, mut span, mut n) = (Complex64::new(0.0, 0.0), 0.0, 0usize);
    for p in samples.windows(2) {
        let d = p[1].0 - p[0].0;
        if d > 0.0 && d <= 1.5 * step {
            sum += p[1].1 * p[0].1.conj() / (p[0].2 * p[1].2);
            span += d;
            n += 1;
        }
    }
    if n == 0 || sum.norm() == 0.0 {
        0.0
    } else {
        sum.arg() / (span / n as f64)
    }
}

/// Candidates per coarse pass of [`resolve_cycles`].
const COARSE_CANDIDATES: usize = 48;

/// Settles the whole-wavelength ambiguity left by [`acquire_phase`].
///
/// Shifting the range polynomial by `nλ` leaves the carrier phase unchanged,
/// so only path gain and wavefront curvature distinguish the candidates. The
/// cost is scanned over `|n λ| ≤ span`, coarsely and then around the best
/// coarse candidate.
pub fn resolve_cycles(model: &MotionPoly, geom: &ArrayGeometry, window: &[Observation], span: f64) -> MotionPoly {
    let lambda = geom.wavelength();
    let max_n = (span / lambda).ceil() as i64;
    if max_n == 0 || window.is_empty() {
        return model.clone();
    }
    let eval = |n: i64| {
        let mut m = model.clone();
        m.beta_mut()[0] += n as f64 * lambda;
        (cost(&m, geom, window), m)
    };
    let stride = ((2 * max_n + 1) as usize).div_ceil(COARSE_CANDIDATES).max(1) as i64;
    let mut best = (f64::INFINITY, 0i64);
    let consider = |n: i64, best: &mut (f64, i64)| {
        let (j, _) = eval(n);
        if j < best.0 || (j == best.0 && n.abs() < best.1.abs()) {
            *best = (j, n);
        }
    };
    let mut n = -max_n;
    while n <= max_n {
        consider(n, &mut best);
        n += stride;
    }
    if stride > 1 {
        let centre = best.1;
        for n in (centre - stride + 1)..(centre + stride) {
            if n != centre && n.abs() <= max_n {
                consider(n, &mut best);
            }
        }
    }
    eval(best.1).1
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}
