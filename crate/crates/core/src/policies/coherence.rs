use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{inner, mrt_beam, ArrayGeometry, PolarState};
use crate::error::{Error, Result};
use crate::trajectory::ClampBounds;

use super::{Beamformer, Codebook, Provenance, SweepPolicy};

/// Time until the gain of a beam focused at `held` drops below `1 − Γ` while
/// the user moves from `start` at constant `(θ̇, ṙ)`. Stepped by `step`,
/// capped at `cap`.
pub fn coherence_expiry(
    geom: &ArrayGeometry,
    held: PolarState,
    start: PolarState,
    velocity: (f64, f64),
    gamma: f64,
    step: f64,
    cap: f64,
) -> f64 {
    if velocity == (0.0, 0.0) || gamma >= 1.0 || !(step > 0.0) {
        return cap;
    }
    let bounds = ClampBounds::for_geometry(geom);
    let beam = mrt_beam(geom, held);
    let floor = 1.0 - gamma;
    let steps = (cap / step).floor() as usize;
    for i in 1..=steps {
        let t = i as f64 * step;
        let s = PolarState {
            theta: (start.theta + velocity.0 * t).clamp(-bounds.theta_max, bounds.theta_max),
            r: (start.r + velocity.1 * t).clamp(bounds.r_min, bounds.r_max),
        };
        // Both beams are unit norm, so |aᴴb|² is the normalized gain.
        if inner(&mrt_beam(geom, s), &beam).norm_sqr() < floor {
            return t;
        }
    }
    cap
}

/// Codebook indices within `±angle_half` angle bins and `±ring_half` rings of
/// the codeword nearest to `center`, angle-major.
pub fn local_sweep(codebook: &Codebook, center: PolarState, angle_half: usize, ring_half: usize) -> Vec<usize> {
    let (a0, s0) = codebook.nearest(center);
    let a_range = a0.saturating_sub(angle_half)..=(a0 + angle_half).min(codebook.num_angles() - 1);
    let s_range = s0.saturating_sub(ring_half)..=(s0 + ring_half).min(codebook.num_rings() - 1);
    let mut out = Vec::new();
    for a in a_range {
        for s in s_range.clone() {
            out.push(codebook.index(a, s));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceConfig {
    /// Tolerable normalized gain loss.
    pub gamma: f64,
    /// Longest hold between sweeps (s).
    pub max_hold: f64,
    pub angle_half_width: usize,
    pub ring_half_width: usize,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig { gamma: 0.5, max_hold: 0.2, angle_half_width: 2, ring_half_width: 1 }
    }
}

impl CoherenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("coherence gamma must lie in (0, 1)"));
        }
        if !(self.max_hold > 0.0) {
            return Err(Error::config("coherence max_hold must be positive"));
        }
        Ok(())
    }
}

enum Phase {
    Sweep { indices: Vec<usize>, next: usize, best: (usize, f64) },
    Hold { index: usize, until: f64 },
}

/// Full sweep once, then hold the best codeword for its predicted coherence
/// time and re-sweep locally around the extrapolated position.
pub struct CoherenceTracker {
    geom: ArrayGeometry,
    bounds: ClampBounds,
    codebook: Arc<Codebook>,
    cfg: CoherenceConfig,
    symbol_time: f64,
    last: Option<(PolarState, f64)>,
    velocity: (f64, f64),
    phase: Phase,
}

impl CoherenceTracker {
    pub fn new(geom: ArrayGeometry, codebook: Arc<Codebook>, cfg: CoherenceConfig, symbol_time: f64) -> Self {
        let all = (0..codebook.len()).collect();
        CoherenceTracker {
            bounds: ClampBounds::for_geometry(&geom),
            geom,
            codebook,
            cfg,
            symbol_time,
            last: None,
            velocity: (0.0, 0.0),
            phase: Phase::Sweep { indices: all, next: 0, best: (0, f64::NEG_INFINITY) },
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        self.velocity
    }

    fn extrapolate(&self, t: f64) -> Option<PolarState> {
        let (z, t0) = self.last?;
        let dt = t - t0;
        Some(PolarState {
            theta: (z.theta + self.velocity.0 * dt).clamp(-self.bounds.theta_max, self.bounds.theta_max),
            r: (z.r + self.velocity.1 * dt).clamp(self.bounds.r_min, self.bounds.r_max),
        })
    }

    fn finish_sweep(&mut self, t: f64, index: usize) {
        let e = &self.codebook.entries()[index];
        let z = PolarState { theta: e.theta, r: e.r };
        if let Some((prev, t0)) = self.last {
            if t > t0 {
                self.velocity = ((z.theta - prev.theta) / (t - t0), (z.r - prev.r) / (t - t0));
            }
        }
        self.last = Some((z, t));
        let hold = coherence_expiry(&self.geom, z, z, self.velocity, self.cfg.gamma, self.symbol_time, self.cfg.max_hold);
        self.phase = Phase::Hold { index, until: t + hold };
    }
}

impl SweepPolicy for CoherenceTracker {
    fn next_beam(&mut self, t: f64) -> Beamformer {
        if let Phase::Hold { until, .. } = self.phase {
            if t >= until {
                let center = self.extrapolate(t).expect("hold follows a sweep");
                let indices = local_sweep(&self.codebook, center, self.cfg.angle_half_width, self.cfg.ring_half_width);
                self.phase = Phase::Sweep { indices, next: 0, best: (0, f64::NEG_INFINITY) };
            }
        }
        let (index, provenance) = match &self.phase {
            Phase::Sweep { indices, next, .. } => (indices[*next], Provenance::Sweep),
            Phase::Hold { index, .. } => (*index, Provenance::Codeword),
        };
        Beamformer { weights: self.codebook.entries()[index].codeword.weights.clone(), provenance }
    }

    fn feedback(&mut self, t: f64, received: Complex64) {
        let done = match &mut self.phase {
            Phase::Sweep { indices, next, best } => {
                let p = received.norm_sqr();
                if p > best.1 {
                    *best = (indices[*next], p);
                }
                *next += 1;
                (*next == indices.len()).then_some(best.0)
            }
            Phase::Hold { .. } => None,
        };
        if let Some(index) = done {
            self.finish_sweep(t, index);
        }
    }

    fn estimate(&self, t: f64) -> Option<PolarState> {
        self.extrapolate(t)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::policies::build_codebook;
    use crate::trajectory::Region;

    fn setup() -> (ArrayGeometry, Arc<Codebook>) {
        let geom = ArrayGeometry::half_wavelength(64, 73e9).unwrap();
        let region = Region { theta_min: -1.0, theta_max: 1.0, r_min: 2.0, r_max: 8.0 };
        let cb = build_codebook(&geom, &region, 64, 8).unwrap();
        (geom, Arc::new(cb))
    }

    #[test]
    fn expiry_shrinks_with_speed_and_grows_with_tolerance() {
        let (geom, _) = setup();
        let s = PolarState { theta: 0.2, r: 4.0 };
        let at = |w: f64, g: f64| coherence_expiry(&geom, s, s, (w, 0.5 * w), g, 1e-4, 0.5);
        assert_eq!(at(0.0, 0.5), 0.5);
        let mut prev = f64::INFINITY;
        for w in [0.05, 0.1, 0.3, 1.0, 3.0] {
            let e = at(w, 0.5);
            assert!(e <= prev, "speed {w}");
            prev = e;
        }
        let mut prev = 0.0;
        for g in [0.1, 0.3, 0.5, 0.9] {
            let e = at(1.0, g);
            assert!(e >= prev, "gamma {g}");
            prev = e;
        }
    }

    #[test]
    fn local_sweep_matches_brute_force() {
        let (_, cb) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let c = PolarState { theta: rng.random_range(-1.1..1.1), r: rng.random_range(1.0..9.0) };
            let (ha, hs) = (rng.random_range(0..4), rng.random_range(0..3));
            let got = local_sweep(&cb, c, ha, hs);
            let (a0, s0) = cb.nearest(c);
            let want: Vec<usize> = (0..cb.len())
                .filter(|&i| {
                    let (a, s) = cb.grid_position(i);
                    a.abs_diff(a0) <= ha && s.abs_diff(s0) <= hs
                })
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn sweeps_everything_then_holds() {
        let (geom, cb) = setup();
        let ts = 1.0 / 30_000.0;
        let mut tr = CoherenceTracker::new(geom.clone(), cb.clone(), CoherenceConfig::default(), ts);
        let target = 77;
        for u in 0..cb.len() {
            let t = u as f64 * ts;
            let b = tr.next_beam(t);
            assert_eq!(b.provenance, Provenance::Sweep);
            let p = if b.weights == cb.entries()[target].codeword.weights { 1.0 } else { 0.1 };
            tr.feedback(t, Complex64::new(p, 0.0));
        }
        let t = cb.len() as f64 * ts;
        let b = tr.next_beam(t);
        assert_eq!(b.provenance, Provenance::Codeword);
        assert_eq!(b.weights, cb.entries()[target].codeword.weights);
        let e = tr.estimate(t).unwrap();
        assert_eq!((e.theta, e.r), (cb.entries()[target].theta, cb.entries()[target].r));
        assert_eq!(tr.velocity(), (0.0, 0.0));
    }

    #[test]
    fn config_checks() {
        assert!(CoherenceConfig::default().validate().is_ok());
        assert!(CoherenceConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(CoherenceConfig { max_hold: 0.0, ..Default::default() }.validate().is_err());
    }
}
