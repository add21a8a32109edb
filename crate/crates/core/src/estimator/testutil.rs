//! Synthetic windows for the estimator tests. Samples come from the channel
//! module, not from the estimator's own forward model.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{inner, los_beam, los_channel, ArrayGeometry, PolarState};
use crate::trajectory::{ClampBounds, MotionPoly};

use super::Observation;

pub(crate) const WINDOW: f64 = 0.0666;

pub(crate) fn geometry(n: usize) -> ArrayGeometry {
    ArrayGeometry::half_wavelength(n, 73e9).unwrap()
}

/// Walking pace, five meters out.
pub(crate) fn truth() -> MotionPoly {
    MotionPoly::from_physical(&[0.3, 0.4, -0.5, 1.0], &[5.0, -2.0, 3.0, 0.0, 0.0, 0.0, 0.0], 0.0, WINDOW)
}

/// `count` samples over the window. Beams aim at the truth with a random
/// angle error of about half a beamwidth and 1 % range error.
pub(crate) fn window(model: &MotionPoly, geom: &ArrayGeometry, count: usize, noise_std: f64, seed: u64) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = ClampBounds::for_geometry(geom);
    let width = 1.0 / geom.num_elements() as f64;
    (0..count)
        .map(|u| {
            let time = model.t_origin() + WINDOW * u as f64 / count as f64;
            let s = model.poly_eval(model.local_time(time), &bounds);
            let aim = PolarState {
                theta: s.theta + width * rng.sample::<f64, _>(StandardNormal),
                r: s.r * (1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal)),
            };
            let beam = los_beam(geom, aim).unwrap();
            let noise = Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * noise_std;
            let received = inner(&los_channel(geom, s).unwrap().0, &beam) + noise;
            Observation { index: u as u64, time, beam, received }
        })
        .collect()
}

/// `model` with every coefficient moved by up to `scale` times a random unit.
pub(crate) fn jitter(model: &MotionPoly, scale: f64, rng: &mut ChaCha8Rng) -> MotionPoly {
    let mut m = model.clone();
    let p: Vec<f64> = m.params().iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
    m.set_params(&p);
    m
}
