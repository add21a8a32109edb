//! Beam selection: exploitation, Thompson-sampling probes, the near-field
//! codebook and the two sweep-based baselines.

mod codebook;
mod coherence;
mod ekf;

use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{mrt_beam, ArrayGeometry, PolarState};
use crate::estimator::PosteriorBelief;
use crate::trajectory::{ClampBounds, MotionPoly};

pub use codebook::{build_codebook, CodeEntry, Codebook};
pub use coherence::{coherence_expiry, local_sweep, CoherenceConfig, CoherenceTracker};
pub use ekf::{ekf_predict, ekf_sweep_update, ekf_update, EkfConfig, EkfState, EkfTracker, SweepSample};

/// Why a beam was transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Warmup,
    Exploit,
    TsProbe,
    Sweep,
    Codeword,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Warmup => "warmup",
            Provenance::Exploit => "exploit",
            Provenance::TsProbe => "ts-probe",
            Provenance::Sweep => "sweep",
            Provenance::Codeword => "codeword",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A unit-norm transmit beam.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub weights: Vec<Complex64>,
    pub provenance: Provenance,
}

impl Beamformer {
    /// MRT beam toward the LoS channel at `state`.
    pub fn towards(geom: &ArrayGeometry, state: PolarState, provenance: Provenance) -> Self {
        Beamformer { weights: mrt_beam(geom, state), provenance }
    }
}

fn predicted_state(model: &MotionPoly, geom: &ArrayGeometry, t_prime: f64) -> PolarState {
    model.poly_eval(t_prime, &ClampBounds::for_geometry(geom))
}

/// MRT toward the channel predicted by the posterior mean.
pub fn exploit_beam(belief: &PosteriorBelief, geom: &ArrayGeometry, t_prime: f64) -> Beamformer {
    Beamformer::towards(geom, predicted_state(&belief.mean, geom, t_prime), Provenance::Exploit)
}

/// Draws `α̃ ~ N(α̂, Σ_α)` and `β̃ ~ N(β̂, Σ_β)` independently.
pub fn ts_sample<R: Rng + ?Sized>(belief: &PosteriorBelief, rng: &mut R) -> MotionPoly {
    let (la, lb) = belief.factors();
    let mut out = belief.mean.clone();
    let za = DVector::from_fn(la.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let zb = DVector::from_fn(lb.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    for (c, d) in out.alpha_mut().iter_mut().zip((la * za).iter()) {
        *c += d;
    }
    for (c, d) in out.beta_mut().iter_mut().zip((lb * zb).iter()) {
        *c += d;
    }
    out
}

/// MRT toward the channel of one posterior draw.
pub fn ts_beam<R: Rng + ?Sized>(belief: &PosteriorBelief, geom: &ArrayGeometry, t_prime: f64, rng: &mut R) -> Beamformer {
    let sample = ts_sample(belief, rng);
    Beamformer::towards(geom, predicted_state(&sample, geom, t_prime), Provenance::TsProbe)
}

/// Per-symbol interface of the sweep-based baselines.
pub trait SweepPolicy {
    /// Beam for the symbol transmitted at global time `t`.
    fn next_beam(&mut self, t: f64) -> Beamformer;
    /// Received sample reported for the beam just returned by `next_beam`.
    fn feedback(&mut self, t: f64, received: Complex64);
    /// Current position estimate, if any.
    fn estimate(&self, t: f64) -> Option<PolarState>;
}
