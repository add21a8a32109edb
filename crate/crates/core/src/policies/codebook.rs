use std::io::Write;

use crate::channel::{ArrayGeometry, PolarState};
use crate::error::{Error, Result};
use crate::trajectory::Region;

use super::{Beamformer, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct CodeEntry {
    pub theta: f64,
    pub r: f64,
    pub codeword: Beamformer,
}

/// Polar-domain grid of focused beams, stored angle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Vec<CodeEntry>,
    sines: Vec<f64>,
    rings: Vec<f64>,
}

/// `A` angles uniform in `sin θ` (cell centres) times `S` rings geometrically
/// spaced between `max(R_Fre, r_min)` and `min(R_Ray, r_max)`.
pub fn build_codebook(geom: &ArrayGeometry, region: &Region, angles: usize, rings: usize) -> Result<Codebook> {
    if angles == 0 || rings == 0 {
        return Err(Error::config("codebook needs at least one angle and one ring"));
    }
    region.validate()?;
    let fb = geom.field_boundaries()?;
    let lo = fb.fresnel.max(region.r_min);
    let hi = fb.rayleigh.min(region.r_max);
    if !(lo < hi) {
        return Err(Error::config(format!(
            "region r ∈ [{}, {}] m does not overlap the near field [{:.3}, {:.3}] m",
            region.r_min, region.r_max, fb.fresnel, fb.rayleigh
        )));
    }
    let (s0, s1) = (region.theta_min.sin(), region.theta_max.sin());
    let sines: Vec<f64> = (0..angles).map(|a| s0 + (a as f64 + 0.5) * (s1 - s0) / angles as f64).collect();
    let ring_r: Vec<f64> = if rings == 1 {
        vec![(lo * hi).sqrt()]
    } else {
        (0..rings).map(|s| lo * (hi / lo).powf(s as f64 / (rings - 1) as f64)).collect()
    };
    let mut entries = Vec::with_capacity(angles * rings);
    for &s in &sines {
        for &r in &ring_r {
            let state = PolarState { theta: s.asin(), r };
            entries.push(CodeEntry { theta: state.theta, r, codeword: Beamformer::towards(geom, state, Provenance::Codeword) });
        }
    }
    Ok(Codebook { entries, sines, rings: ring_r })
}

impl Codebook {
    pub fn entries(&self) -> &[CodeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_angles(&self) -> usize {
        self.sines.len()
    }

    pub fn num_rings(&self) -> usize {
        self.rings.len()
    }

    pub fn rings(&self) -> &[f64] {
        &self.rings
    }

    /// Sine-domain angle spacing.
    pub fn sine_step(&self) -> f64 {
        match self.sines.as_slice() {
            [a, b, ..] => b - a,
            [_] => 2.0,
            [] => 0.0,
        }
    }

    /// Ring spacing around ring `s`.
    pub fn ring_step(&self, s: usize) -> f64 {
        match self.rings.len() {
            0 => 0.0,
            1 => self.rings[0],
            n => {
                let (a, b) = if s + 1 < n { (s, s + 1) } else { (n - 2, n - 1) };
                self.rings[b] - self.rings[a]
            }
        }
    }

    pub fn index(&self, angle: usize, ring: usize) -> usize {
        angle * self.rings.len() + ring
    }

    /// `(angle, ring)` of entry `i`.
    pub fn grid_position(&self, i: usize) -> (usize, usize) {
        (i / self.rings.len(), i % self.rings.len())
    }

    /// Codeword nearest to `state`: closest angle in `sin θ`, then closest ring.
    pub fn nearest(&self, state: PolarState) -> (usize, usize) {
        (nearest_index(&self.sines, state.theta.sin()), nearest_index(&self.rings, state.r))
    }

    /// Writes `theta_q,r_q` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["theta_q", "r_q"])?;
        for e in &self.entries {
            w.write_record([format!("{:.17e}", e.theta), format!("{:.17e}", e.r)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn nearest_index(grid: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, g) in grid.iter().enumerate() {
        if (g - x).abs() < (grid[best] - x).abs() {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::channel::{los_channel, normalized_gain};

    fn desk() -> (ArrayGeometry, Region) {
        let geom = ArrayGeometry::half_wavelength(64, 73e9).unwrap();
        let region = Region { theta_min: -60f64.to_radians(), theta_max: 60f64.to_radians(), r_min: 2.0, r_max: 8.0 };
        (geom, region)
    }

    #[test]
    fn layout_is_angle_major() {
        let (geom, region) = desk();
        let cb = build_codebook(&geom, &region, 64, 8).unwrap();
        assert_eq!(cb.len(), 512);
        for i in 0..cb.len() {
            let (a, s) = cb.grid_position(i);
            assert_eq!(cb.index(a, s), i);
        }
        let e = cb.entries();
        assert!(e[0].theta < e[8].theta && e[0].r < e[1].r);
        assert!((e[1].r / e[0].r - e[2].r / e[1].r).abs() < 1e-12);
        let fb = geom.field_boundaries().unwrap();
        assert!((e[0].r - fb.fresnel.max(2.0)).abs() < 1e-12);
        assert!((e[7].r - fb.rayleigh.min(8.0)).abs() < 1e-12);
        // Cell centres: half a step in from each edge.
        assert!((e[0].theta.sin() - (region.theta_min.sin() + 0.5 * cb.sine_step())).abs() < 1e-12);
    }

    #[test]
    fn nearest_matches_brute_force() {
        let (geom, region) = desk();
        let cb = build_codebook(&geom, &region, 20, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let s = PolarState { theta: rng.random_range(-1.2..1.2), r: rng.random_range(1.0..10.0) };
            let (a, r) = cb.nearest(s);
            let by_angle = (0..cb.num_angles())
                .min_by(|&i, &j| {
                    let d = |k: usize| (cb.entries()[cb.index(k, 0)].theta.sin() - s.theta.sin()).abs();
                    d(i).total_cmp(&d(j))
                })
                .unwrap();
            let by_ring = (0..cb.num_rings()).min_by(|&i, &j| (cb.rings()[i] - s.r).abs().total_cmp(&(cb.rings()[j] - s.r).abs())).unwrap();
            assert_eq!((a, r), (by_angle, by_ring));
        }
    }

    /// Every user position in the region has a codeword within a few dB.
    #[test]
    fn grid_covers_the_region() {
        let (geom, region) = desk();
        let cb = build_codebook(&geom, &region, 64, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 1.0f64;
        for _ in 0..200 {
            let s = PolarState { theta: rng.random_range(region.theta_min..region.theta_max), r: rng.random_range(region.r_min..region.r_max) };
            let h = los_channel(&geom, s).unwrap();
            let best = cb.entries().iter().map(|e| normalized_gain(&h, &e.codeword.weights)).fold(0.0, f64::max);
            worst = worst.min(best);
        }
        assert!(worst > 0.5, "worst best-codeword gain {worst}");
    }

    #[test]
    fn invalid_grids_are_config_errors() {
        let (geom, region) = desk();
        assert!(build_codebook(&geom, &region, 0, 4).is_err());
        let far = Region { r_min: 50.0, r_max: 80.0, ..region };
        assert!(build_codebook(&geom, &far, 8, 4).is_err());
    }

    #[test]
    fn csv_has_one_row_per_codeword() {
        let (geom, region) = desk();
        let cb = build_codebook(&geom, &region, 4, 3).unwrap();
        let mut buf = Vec::new();
        cb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta_q,r_q\n"));
        assert_eq!(text.lines().count(), 13);
    }
}
