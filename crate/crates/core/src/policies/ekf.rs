use std::sync::Arc;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, PolarState};
use crate::error::{Error, Result};
use crate::trajectory::ClampBounds;

use super::{Beamformer, Codebook, Provenance, SweepPolicy};

/// Constant-velocity filter over `[θ, θ̇, r, ṙ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
    /// Process noise densities, per second.
    pub q: Vector4<f64>,
    /// Measurement noise of the last update.
    pub r: Vector2<f64>,
}

impl EkfState {
    pub fn position(&self) -> PolarState {
        PolarState { theta: self.x[0], r: self.x[2] }
    }
}

pub fn ekf_predict(state: &EkfState, dt: f64) -> EkfState {
    let mut f = Matrix4::identity();
    f[(0, 1)] = dt;
    f[(2, 3)] = dt;
    let p = f * state.p * f.transpose() + Matrix4::from_diagonal(&(state.q * dt));
    EkfState { x: f * state.x, p: (p + p.transpose()) * 0.5, ..state.clone() }
}

/// Position update with measurement `z` and noise variances `r`.
pub fn ekf_update(state: &EkfState, z: PolarState, r: Vector2<f64>) -> EkfState {
    let mut h = Matrix2x4::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 2)] = 1.0;
    let rm = Matrix2::from_diagonal(&r);
    let s = h * state.p * h.transpose() + rm;
    let s_inv = s.try_inverse().unwrap_or_else(Matrix2::zeros);
    let k = state.p * h.transpose() * s_inv;
    let innov = Vector2::new(z.theta, z.r) - h * state.x;
    // Joseph form keeps P symmetric positive definite.
    let ikh = Matrix4::identity() - k * h;
    let p = ikh * state.p * ikh.transpose() + k * rm * k.transpose();
    EkfState { x: state.x + k * innov, p: (p + p.transpose()) * 0.5, q: state.q, r }
}

/// Result of transmitting one sweep codeword.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSample {
    pub received: Complex64,
    pub gain: f64,
}

/// Measurement noise for a quantized reading at codeword `i`.
fn grid_noise(codebook: &Codebook, i: usize) -> Vector2<f64> {
    let (_, ring) = codebook.grid_position(i);
    let e = &codebook.entries()[i];
    let ds = codebook.sine_step();
    let dr = codebook.ring_step(ring);
    Vector2::new(ds * ds / 12.0 / e.theta.cos().powi(2), dr * dr / 12.0)
}

/// Sends every codeword once through `oracle`, takes the strongest as the
/// position measurement and updates the filter. Returns the per-symbol gains
/// and the chosen codeword.
pub fn ekf_sweep_update<F>(state: &EkfState, codebook: &Codebook, mut oracle: F) -> (EkfState, Vec<f64>, usize)
where
    F: FnMut(&Beamformer) -> SweepSample,
{
    let mut gains = Vec::with_capacity(codebook.len());
    let mut powers = Vec::with_capacity(codebook.len());
    for e in codebook.entries() {
        let beam = Beamformer { weights: e.codeword.weights.clone(), provenance: Provenance::Sweep };
        let s = oracle(&beam);
        gains.push(s.gain);
        powers.push(s.received.norm_sqr());
    }
    let best = argmax(&powers);
    debug_assert!(powers.iter().all(|&p| p <= powers[best]));
    let e = &codebook.entries()[best];
    let next = ekf_update(state, PolarState { theta: e.theta, r: e.r }, grid_noise(codebook, best));
    (next, gains, best)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EkfConfig {
    /// Payload time between the end of one sweep and the start of the next (s).
    pub period: f64,
    /// Process noise densities for `[θ, θ̇, r, ṙ]` per second.
    pub q: [f64; 4],
    /// Prior standard deviations of the velocities at the first sweep.
    pub omega_std: f64,
    pub rdot_std: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig { period: 0.04, q: [1e-6, 1e-4, 1e-4, 1e-2], omega_std: 0.5, rdot_std: 5.0 }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || self.q.iter().any(|q| !(*q >= 0.0)) || !(self.omega_std > 0.0 && self.rdot_std > 0.0) {
            return Err(Error::config("ekf period, noise densities and prior spreads must be positive"));
        }
        Ok(())
    }
}

enum Phase {
    Sweep { next: usize, powers: Vec<f64> },
    Payload { until: f64 },
}

/// Periodic exhaustive sweep feeding a constant-velocity EKF; payload symbols
/// use MRT toward the filter's prediction.
pub struct EkfTracker {
    geom: ArrayGeometry,
    bounds: ClampBounds,
    codebook: Arc<Codebook>,
    cfg: EkfConfig,
    filter: Option<(EkfState, f64)>,
    phase: Phase,
}

impl EkfTracker {
    pub fn new(geom: ArrayGeometry, codebook: Arc<Codebook>, cfg: EkfConfig) -> Self {
        EkfTracker {
            bounds: ClampBounds::for_geometry(&geom),
            geom,
            codebook,
            cfg,
            filter: None,
            phase: Phase::Sweep { next: 0, powers: Vec::new() },
        }
    }

    pub fn filter(&self) -> Option<&EkfState> {
        self.filter.as_ref().map(|(f, _)| f)
    }

    fn finish_sweep(&mut self, t: f64, powers: &[f64]) {
        let best = argmax(powers);
        let e = &self.codebook.entries()[best];
        let z = PolarState { theta: e.theta, r: e.r };
        let noise = grid_noise(&self.codebook, best);
        let next = match &self.filter {
            None => EkfState {
                x: Vector4::new(z.theta, 0.0, z.r, 0.0),
                p: Matrix4::from_diagonal(&Vector4::new(
                    noise[0],
                    self.cfg.omega_std.powi(2),
                    noise[1],
                    self.cfg.rdot_std.powi(2),
                )),
                q: Vector4::from(self.cfg.q),
                r: noise,
            },
            Some((f, t0)) => ekf_update(&ekf_predict(f, t - t0), z, noise),
        };
        self.filter = Some((next, t));
        self.phase = Phase::Payload { until: t + self.cfg.period };
    }
}

impl SweepPolicy for EkfTracker {
    fn next_beam(&mut self, t: f64) -> Beamformer {
        if let Phase::Payload { until } = self.phase {
            if t >= until {
                self.phase = Phase::Sweep { next: 0, powers: Vec::with_capacity(self.codebook.len()) };
            }
        }
        match &self.phase {
            Phase::Sweep { next, .. } => Beamformer {
                weights: self.codebook.entries()[*next].codeword.weights.clone(),
                provenance: Provenance::Sweep,
            },
            Phase::Payload { .. } => {
                let s = self.estimate(t).expect("payload follows a completed sweep");
                Beamformer::towards(&self.geom, s, Provenance::Exploit)
            }
        }
    }

    fn feedback(&mut self, t: f64, received: Complex64) {
        let done = match &mut self.phase {
            Phase::Sweep { next, powers } => {
                powers.push(received.norm_sqr());
                *next += 1;
                (*next == self.codebook.len()).then(|| std::mem::take(powers))
            }
            Phase::Payload { .. } => None,
        };
        if let Some(powers) = done {
            self.finish_sweep(t, &powers);
        }
    }

    fn estimate(&self, t: f64) -> Option<PolarState> {
        let (f, t0) = self.filter.as_ref()?;
        let dt = t - t0;
        let theta = (f.x[0] + f.x[1] * dt).clamp(-self.bounds.theta_max, self.bounds.theta_max);
        let r = (f.x[2] + f.x[3] * dt).clamp(self.bounds.r_min, self.bounds.r_max);
        Some(PolarState { theta, r })
    }
}
