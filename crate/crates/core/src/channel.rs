//! Near-field ULA geometry, steering vectors and LoS/NLoS channel synthesis.
//!
//! The array lies on the y-axis centred at the origin; element `n` sits at
//! `(0, δ_n d)` with `δ_n = (2n − N + 1)/2`. A user at polar position
//! `(θ, r)` sits at `(r cos θ, r sin θ)`, so `θ = 0` is broadside.
//!
//! All phases are built from the path difference `r_n − r`, evaluated in a
//! cancellation-free form, plus the carrier phase `2π·frac(r/λ)`. Both are
//! reduced modulo 2π before exponentiation so that ranges of tens of metres
//! at millimetre wavelengths keep full phase accuracy.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numeric::sin_cos;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear array description.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    num_elements: usize,
    spacing: f64,
    wavelength: f64,
    carrier: f64,
    /// Element positions `δ_n d` along the array axis, in meters.
    positions: Vec<f64>,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, carrier_hz: f64, spacing_m: f64) -> Result<Self> {
        if num_elements == 0 {
            return Err(Error::config("array needs at least one element"));
        }
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(Error::config(format!("carrier must be positive, got {carrier_hz}")));
        }
        if !(spacing_m.is_finite() && spacing_m > 0.0) {
            return Err(Error::config(format!("element spacing must be positive, got {spacing_m}")));
        }
        let positions = (0..num_elements)
            .map(|n| element_offset(num_elements, n) * spacing_m)
            .collect();
        Ok(Self {
            num_elements,
            spacing: spacing_m,
            wavelength: SPEED_OF_LIGHT / carrier_hz,
            carrier: carrier_hz,
            positions,
        })
    }

    /// Array with `d = λ/2`.
    pub fn half_wavelength(num_elements: usize, carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(Error::config(format!("carrier must be positive, got {carrier_hz}")));
        }
        Self::new(num_elements, carrier_hz, 0.5 * SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    /// `2π/λ`.
    #[inline(always)]
    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    /// Physical aperture `(N − 1)d`.
    pub fn aperture(&self) -> f64 {
        (self.num_elements - 1) as f64 * self.spacing
    }

    /// Dimensionless offset `δ_n`.
    pub fn offset(&self, n: usize) -> f64 {
        element_offset(self.num_elements, n)
    }

    /// Element positions `δ_n d` in meters.
    #[inline(always)]
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Fresnel and Rayleigh distances bounding the radiative near field.
    pub fn field_boundaries(&self) -> Result<FieldBoundaries> {
        if self.num_elements < 2 {
            return Err(Error::config("field boundaries need at least two elements"));
        }
        let d = self.aperture();
        Ok(FieldBoundaries {
            fresnel: 0.5 * (d.powi(3) / self.wavelength).sqrt(),
            rayleigh: 2.0 * d * d / self.wavelength,
        })
    }

    /// Carrier phase `2πr/λ` reduced to `[0, 2π)`.
    #[inline(always)]
    pub(crate) fn carrier_phase(&self, r: f64) -> f64 {
        TAU * (r / self.wavelength).rem_euclid(1.0)
    }
}

#[inline]
fn element_offset(num_elements: usize, n: usize) -> f64 {
    (2.0 * n as f64 - num_elements as f64 + 1.0) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBoundaries {
    pub fresnel: f64,
    pub rayleigh: f64,
}

impl FieldBoundaries {
    pub fn contains(&self, r: f64) -> bool {
        r > self.fresnel && r < self.rayleigh
    }
}

/// Instantaneous polar position of the user relative to the array centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarState {
    /// Angle from broadside, radians.
    pub theta: f64,
    /// Range, meters.
    pub r: f64,
}

impl PolarState {
    pub fn new(theta: f64, r: f64) -> Result<Self> {
        let s = Self { theta, r };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::domain(format!("range must be positive, got {}", self.r)));
        }
        if !(self.theta.is_finite() && self.theta.abs() < PI / 2.0) {
            return Err(Error::domain(format!("angle {} outside (-pi/2, pi/2)", self.theta)));
        }
        Ok(())
    }

    pub fn from_cartesian(x: f64, y: f64) -> Self {
        Self { theta: y.atan2(x), r: x.hypot(y) }
    }

    pub fn to_cartesian(&self) -> (f64, f64) {
        (self.r * self.theta.cos(), self.r * self.theta.sin())
    }
}

/// Static point scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub theta: f64,
    /// Distance from the array centre, meters.
    pub range: f64,
    /// Complex reflection coefficient.
    pub reflection: Complex64,
}

/// Length-N complex channel (or beam) vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(pub Vec<Complex64>);

impl ChannelVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `h / ‖h‖`; the MRT beam toward this channel.
    pub fn normalized(&self) -> Vec<Complex64> {
        let inv = 1.0 / self.norm();
        self.0.iter().map(|c| c * inv).collect()
    }
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// `aᴴ b`.
#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}

/// Path difference `r_n − r` for an element at `pos` meters, written so that
/// it does not cancel catastrophically when `r ≫ pos`. Returns `(r_n − r, r_n)`.
#[inline(always)]
pub(crate) fn path_difference(pos: f64, r: f64, sin_theta: f64) -> (f64, f64) {
    let cross = pos * pos - 2.0 * r * sin_theta * pos;
    let rn = (r * r + cross).sqrt();
    (cross / (rn + r), rn)
}

/// Distance from element `n` to the user.
pub fn element_distance(geom: &ArrayGeometry, state: PolarState, n: usize) -> Result<f64> {
    if n >= geom.num_elements {
        return Err(Error::domain(format!("element index {n} out of range")));
    }
    let pos = geom.positions[n];
    let radicand = state.r * state.r + pos * pos - 2.0 * state.r * state.theta.sin() * pos;
    if !(radicand > 0.0) {
        return Err(Error::domain(format!(
            "non-positive squared distance {radicand} for element {n} at {state:?}"
        )));
    }
    Ok(radicand.sqrt())
}

fn check_state(geom: &ArrayGeometry, state: PolarState) -> Result<()> {
    state.validate()?;
    let reach = geom.positions.last().map_or(0.0, |p| p.abs());
    if state.r <= reach {
        // r > max|δ_n| d keeps every element distance strictly positive.
        return Err(Error::domain(format!(
            "range {} does not clear the array half-aperture {reach}",
            state.r
        )));
    }
    Ok(())
}

/// Near-field steering vector `b(θ, r)`, unit norm.
pub fn steering_vector(geom: &ArrayGeometry, state: PolarState) -> Result<ChannelVector> {
    check_state(geom, state)?;
    Ok(ChannelVector(phased_vector(geom, state, 0.0, 1.0)))
}

/// `scale·exp(−j(φ₀ + k(r_n − r)))/√N` for every element.
fn phased_vector(geom: &ArrayGeometry, state: PolarState, phi0: f64, scale: f64) -> Vec<Complex64> {
    let k = geom.wavenumber();
    let s = state.theta.sin();
    let amp = scale / (geom.num_elements as f64).sqrt();
    geom.positions
        .iter()
        .map(|&pos| {
            let (diff, _) = path_difference(pos, state.r, s);
            let (sn, cs) = sin_cos(phi0 + k * diff);
            Complex64::new(amp * cs, -amp * sn)
        })
        .collect()
}

/// Free-space path gain `λ/(4πr)`.
#[inline(always)]
pub fn path_gain(geom: &ArrayGeometry, r: f64) -> f64 {
    geom.wavelength / (4.0 * PI * r)
}

/// LoS channel `g e^{−j2πr/λ} b(θ, r)`.
pub fn los_channel(geom: &ArrayGeometry, state: PolarState) -> Result<ChannelVector> {
    check_state(geom, state)?;
    let g = path_gain(geom, state.r);
    Ok(ChannelVector(phased_vector(geom, state, geom.carrier_phase(state.r), g)))
}

/// MRT beam toward the LoS channel at `state`: `e^{−j2πr/λ} b(θ, r)`.
pub fn los_beam(geom: &ArrayGeometry, state: PolarState) -> Result<Vec<Complex64>> {
    check_state(geom, state)?;
    Ok(phased_vector(geom, state, geom.carrier_phase(state.r), 1.0))
}

/// [`los_beam`] for a state already known to clear the aperture.
pub(crate) fn mrt_beam(geom: &ArrayGeometry, state: PolarState) -> Vec<Complex64> {
    debug_assert!(check_state(geom, state).is_ok(), "{state:?}");
    phased_vector(geom, state, geom.carrier_phase(state.r), 1.0)
}

/// Scatterer-to-user distance `r_{l,2}`.
pub fn scatterer_distance(state: PolarState, sc: &Scatterer) -> f64 {
    let r2 = state.r * state.r + sc.range * sc.range
        - 2.0 * state.r * sc.range * (state.theta - sc.theta).cos();
    r2.max(0.0).sqrt()
}

/// Sum of static single-bounce reflection paths.
pub fn nlos_channel(geom: &ArrayGeometry, state: PolarState, scatterers: &[Scatterer]) -> Result<ChannelVector> {
    state.validate()?;
    let mut h = ChannelVector::zeros(geom.num_elements);
    for (l, sc) in scatterers.iter().enumerate() {
        if !(sc.range > 0.0) {
            return Err(Error::domain(format!("scatterer {l} has non-positive range {}", sc.range)));
        }
        let r2 = scatterer_distance(state, sc);
        if !(r2 > 0.0) {
            return Err(Error::domain(format!("user coincides with scatterer {l}")));
        }
        if sc.reflection == Complex64::new(0.0, 0.0) {
            continue;
        }
        let at = PolarState { theta: sc.theta, r: sc.range };
        check_state(geom, at)?;
        let gl = sc.reflection * (geom.wavelength / (4.0 * PI * sc.range * r2));
        let phi = TAU * ((sc.range + r2) / geom.wavelength).rem_euclid(1.0);
        let path = phased_vector(geom, at, phi, 1.0);
        for (acc, p) in h.0.iter_mut().zip(path) {
            *acc += gl * p;
        }
    }
    Ok(h)
}

/// LoS plus NLoS.
pub fn full_channel(geom: &ArrayGeometry, state: PolarState, scatterers: &[Scatterer]) -> Result<ChannelVector> {
    let mut h = los_channel(geom, state)?;
    if scatterers.is_empty() {
        return Ok(h);
    }
    let nlos = nlos_channel(geom, state, scatterers)?;
    for (a, b) in h.0.iter_mut().zip(&nlos.0) {
        *a += b;
    }
    Ok(h)
}

/// Received sample `hᴴ w x + n`.
pub fn receive_symbol(h: &ChannelVector, w: &[Complex64], x: Complex64, noise: Complex64) -> Complex64 {
    debug_assert!((norm_sqr(w).sqrt() - 1.0).abs() < 1e-9, "beamformer is not unit norm");
    inner(&h.0, w) * x + noise
}

/// `|hᴴw|² / ‖h‖²`.
pub fn normalized_gain(h: &ChannelVector, w: &[Complex64]) -> f64 {
    let p = h.norm_sqr();
    if p == 0.0 {
        return 0.0;
    }
    (inner(&h.0, w).norm_sqr() / p).clamp(0.0, 1.0)
}
