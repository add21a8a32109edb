//! Predicted observations `μ_u = ĥ_uᴴ w_u` and the least-squares cost.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{path_difference, path_gain, ArrayGeometry, PolarState};
use crate::numeric::sin_cos;
use crate::trajectory::{ClampBounds, MotionPoly};

use super::Observation;

/// Observations per reduction chunk. The chunk partials are summed in index
/// order, so results do not depend on the number of worker threads.
pub(crate) const CHUNK: usize = 32;

/// Elements per stack block inside the kernels.
const BLOCK: usize = 64;
/// Independent accumulator lanes; fixes the summation order.
const LANES: usize = 4;

/// `μ` and its partial derivatives with respect to `θ` and `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuTerms {
    pub mu: Complex64,
    pub d_theta: Complex64,
    pub d_r: Complex64,
}

#[inline(always)]
fn prefactor(geom: &ArrayGeometry, r: f64) -> Complex64 {
    let amp = path_gain(geom, r) / (geom.num_elements() as f64).sqrt();
    let (sn, cs) = sin_cos(geom.carrier_phase(r));
    Complex64::new(amp * cs, amp * sn)
}

#[inline(always)]
fn lane_sum(a: &[f64; LANES]) -> f64 {
    (a[0] + a[1]) + (a[2] + a[3])
}

/// Sums `Σ_n e^{jk(r_n − r)} w_n` and, if `DERIV`, the same sums weighted by
/// `∂r_n/∂θ` and `∂r_n/∂r`. Returns `[S₀, S_θ, S_r]`.
#[inline(always)]
fn element_sums<const DERIV: bool>(geom: &ArrayGeometry, state: PolarState, w: &[Complex64]) -> [Complex64; 3] {
    let k = geom.wavenumber();
    let r = state.r;
    let (s, c) = state.theta.sin_cos();
    let mut acc = [[0.0; LANES]; 6];
    let mut tail = [0.0; 6];
    let mut sn = [0.0; BLOCK];
    let mut cs = [0.0; BLOCK];
    let mut dth = [0.0; BLOCK];
    let mut drr = [0.0; BLOCK];
    for (pos, wb) in geom.positions().chunks(BLOCK).zip(w.chunks(BLOCK)) {
        let len = pos.len().min(wb.len());
        for i in 0..len {
            let (diff, rn) = path_difference(pos[i], r, s);
            let (a, b) = sin_cos(k * diff);
            sn[i] = a;
            cs[i] = b;
            if DERIV {
                let inv = 1.0 / rn;
                dth[i] = -r * c * pos[i] * inv;
                drr[i] = (r - s * pos[i]) * inv;
            }
        }
        let full = len - len % LANES;
        for base in (0..full).step_by(LANES) {
            #[allow(clippy::needless_range_loop)]
            for l in 0..LANES {
                let i = base + l;
                let (wr, wi) = (wb[i].re, wb[i].im);
                let er = cs[i] * wr - sn[i] * wi;
                let ei = cs[i] * wi + sn[i] * wr;
                acc[0][l] += er;
                acc[1][l] += ei;
                if DERIV {
                    acc[2][l] += dth[i] * er;
                    acc[3][l] += dth[i] * ei;
                    acc[4][l] += drr[i] * er;
                    acc[5][l] += drr[i] * ei;
                }
            }
        }
        for i in full..len {
            let (wr, wi) = (wb[i].re, wb[i].im);
            let er = cs[i] * wr - sn[i] * wi;
            let ei = cs[i] * wi + sn[i] * wr;
            tail[0] += er;
            tail[1] += ei;
            if DERIV {
                tail[2] += dth[i] * er;
                tail[3] += dth[i] * ei;
                tail[4] += drr[i] * er;
                tail[5] += drr[i] * ei;
            }
        }
    }
    let v: [f64; 6] = std::array::from_fn(|j| lane_sum(&acc[j]) + tail[j]);
    [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3]), Complex64::new(v[4], v[5])]
}

#[inline(always)]
fn mu_inline(geom: &ArrayGeometry, state: PolarState, w: &[Complex64]) -> Complex64 {
    prefactor(geom, state.r) * element_sums::<false>(geom, state, w)[0]
}

#[inline(always)]
fn terms_inline(geom: &ArrayGeometry, state: PolarState, w: &[Complex64]) -> MuTerms {
    let [s0, st, sr] = element_sums::<true>(geom, state, w);
    let pre = prefactor(geom, state.r);
    let mu = pre * s0;
    // The derivative of e^{jk r_n} brings down jk ∂r_n/∂(·).
    let jk_pre = Complex64::new(0.0, geom.wavenumber()) * pre;
    MuTerms { mu, d_theta: jk_pre * st, d_r: -mu / state.r + jk_pre * sr }
}

/// `ĥᴴ w` for the LoS channel predicted at `state`.
///
/// `ĥ_n = (ĝ/√N) e^{−j k r_n}`, so `μ = (ĝ/√N) e^{jφ_r} Σ_n e^{jk(r_n − r)} w_n`.
pub fn mu_at(geom: &ArrayGeometry, state: PolarState, w: &[Complex64]) -> Complex64 {
    mu_inline(geom, state, w)
}

/// `μ`, `∂μ/∂θ` and `∂μ/∂r` in one pass over the elements.
pub fn mu_terms(geom: &ArrayGeometry, state: PolarState, w: &[Complex64]) -> MuTerms {
    terms_inline(geom, state, w)
}

/// Per-observation quantities a window reduction needs.
pub(crate) struct ObsTerms {
    pub tau: f64,
    pub flags: crate::trajectory::ClampFlags,
    pub terms: MuTerms,
    pub residual: Complex64,
}

#[inline(always)]
fn obs_terms_inline(model: &MotionPoly, geom: &ArrayGeometry, bounds: &ClampBounds, obs: &Observation) -> ObsTerms {
    let t = model.local_time(obs.time);
    let (state, flags) = model.eval_flagged(t, bounds);
    let terms = terms_inline(geom, state, &obs.beam);
    ObsTerms { tau: t / model.time_scale(), flags, terms, residual: obs.received - terms.mu }
}

#[inline(always)]
fn chunk_terms_inline(model: &MotionPoly, geom: &ArrayGeometry, bounds: &ClampBounds, chunk: &[Observation], out: &mut Vec<ObsTerms>) {
    // Plain loops: iterator adapters would not inherit the caller's target features.
    for obs in chunk {
        out.push(obs_terms_inline(model, geom, bounds, obs));
    }
}

#[inline(always)]
fn chunk_cost_inline(model: &MotionPoly, geom: &ArrayGeometry, bounds: &ClampBounds, chunk: &[Observation]) -> f64 {
    let mut total = 0.0;
    for obs in chunk {
        let state = model.poly_eval(model.local_time(obs.time), bounds);
        total += (obs.received - mu_inline(geom, state, &obs.beam)).norm_sqr();
    }
    total
}

/// Copies of the window kernels compiled for wider vector units. Wider units
/// only change speed: the arithmetic and its order are identical on every path.
#[cfg(target_arch = "x86_64")]
mod wide {
    use super::*;

    #[derive(Clone, Copy, PartialEq, Eq)]
    pub(super) enum Level {
        Base,
        Avx2,
        Avx512,
    }

    pub(super) fn level() -> Level {
        if std::is_x86_feature_detected!("avx512f") {
            Level::Avx512
        } else if std::is_x86_feature_detected!("avx2") {
            Level::Avx2
        } else {
            Level::Base
        }
    }

    macro_rules! variant {
        ($feature:literal, $terms:ident, $cost:ident) => {
            #[target_feature(enable = $feature)]
            pub(super) fn $terms(model: &MotionPoly, geom: &ArrayGeometry, bounds: &ClampBounds, chunk: &[Observation], out: &mut Vec<ObsTerms>) {
                chunk_terms_inline(model, geom, bounds, chunk, out)
            }

            #[target_feature(enable = $feature)]
            pub(super) fn $cost(model: &MotionPoly, geom: &ArrayGeometry, bounds: &ClampBounds, chunk: &[Observation]) -> f64 {
                chunk_cost_inline(model, geom, bounds, chunk)
            }
        };
    }

    variant!("avx2", terms_avx2, cost_avx2);
    variant!("avx512f", terms_avx512, cost_avx512);
}

/// Kernel terms for every observation of `chunk`.
pub(crate) fn chunk_terms(model: &MotionPoly, geom: &ArrayGeometry, bounds: &ClampBounds, chunk: &[Observation]) -> Vec<ObsTerms> {
    let mut out = Vec::with_capacity(chunk.len());
    #[cfg(target_arch = "x86_64")]
    match wide::level() {
        // SAFETY: each variant runs only after its feature was detected.
        wide::Level::Avx512 => unsafe { wide::terms_avx512(model, geom, bounds, chunk, &mut out) },
        wide::Level::Avx2 => unsafe { wide::terms_avx2(model, geom, bounds, chunk, &mut out) },
        wide::Level::Base => chunk_terms_inline(model, geom, bounds, chunk, &mut out),
    }
    #[cfg(not(target_arch = "x86_64"))]
    chunk_terms_inline(model, geom, bounds, chunk, &mut out);
    out
}

fn chunk_cost(model: &MotionPoly, geom: &ArrayGeometry, bounds: &ClampBounds, chunk: &[Observation]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    return match wide::level() {
        // SAFETY: each variant runs only after its feature was detected.
        wide::Level::Avx512 => unsafe { wide::cost_avx512(model, geom, bounds, chunk) },
        wide::Level::Avx2 => unsafe { wide::cost_avx2(model, geom, bounds, chunk) },
        wide::Level::Base => chunk_cost_inline(model, geom, bounds, chunk),
    };
    #[cfg(not(target_arch = "x86_64"))]
    chunk_cost_inline(model, geom, bounds, chunk)
}

/// Noiseless prediction for one observation under `model`.
pub fn predict_mu(model: &MotionPoly, geom: &ArrayGeometry, obs: &Observation) -> Complex64 {
    let bounds = ClampBounds::for_geometry(geom);
    let state = model.poly_eval(model.local_time(obs.time), &bounds);
    mu_at(geom, state, &obs.beam)
}

/// `J = Σ_u |y_u − μ_u|²`.
pub fn cost(model: &MotionPoly, geom: &ArrayGeometry, window: &[Observation]) -> f64 {
    let bounds = ClampBounds::for_geometry(geom);
    let partials: Vec<f64> = window.par_chunks(CHUNK).map(|c| chunk_cost(model, geom, &bounds, c)).collect();
    partials.iter().sum()
}

/// Residuals `y_u − μ_u`.
pub fn residuals(model: &MotionPoly, geom: &ArrayGeometry, window: &[Observation]) -> Vec<Complex64> {
    let bounds = ClampBounds::for_geometry(geom);
    window
        .iter()
        .map(|obs| {
            let state = model.poly_eval(model.local_time(obs.time), &bounds);
            obs.received - mu_at(geom, state, &obs.beam)
        })
        .collect()
}

/// Cost and its gradient with respect to the normalized `[α; β]` coefficients.
///
/// Uses `∂|e|²/∂ϑ = −2 Re{e* ∂μ/∂ϑ}` for `e = y − μ`. Components clamped by
/// the validity box contribute zero gradient.
pub fn cost_and_grad(model: &MotionPoly, geom: &ArrayGeometry, window: &[Observation]) -> (f64, Vec<f64>) {
    let bounds = ClampBounds::for_geometry(geom);
    let na = model.alpha().len();
    let nb = model.beta().len();
    let partials: Vec<(f64, Vec<f64>)> = window
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut j = 0.0;
            let mut g = vec![0.0; na + nb];
            for o in chunk_terms(model, geom, &bounds, chunk) {
                let e = o.residual;
                j += e.norm_sqr();
                if !o.flags.theta {
                    accumulate_powers(&mut g[..na], -2.0 * (e.conj() * o.terms.d_theta).re, o.tau);
                }
                if !o.flags.r {
                    accumulate_powers(&mut g[na..], -2.0 * (e.conj() * o.terms.d_r).re, o.tau);
                }
            }
            (j, g)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; na + nb];
    for (j, g) in partials {
        total += j;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    (total, grad)
}

/// Gradient of [`cost`].
pub fn grad(model: &MotionPoly, geom: &ArrayGeometry, window: &[Observation]) -> Vec<f64> {
    cost_and_grad(model, geom, window).1
}

#[inline]
pub(crate) fn accumulate_powers(dst: &mut [f64], value: f64, tau: f64) {
    let mut p = value;
    for d in dst {
        *d += p;
        p *= tau;
    }
}
