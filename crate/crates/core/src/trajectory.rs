//! User motion: the sliding-window polynomial model and the ground-truth
//! trajectory generator.
//!
//! [`MotionPoly`] stores its coefficients in a normalized time basis
//! `τ = t′/T_H ∈ [0, 1]`, so that an order-6 range polynomial over a 66.6 ms
//! window is not a vector of wildly different magnitudes. Physical-basis
//! coefficients (`rad/sⁱ`, `m/sⁱ`) are available through accessors.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::{Read, Write};
use std::path::Path;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, PolarState};
use crate::error::{Error, Result};
use crate::spline::CubicSpline;

/// Validity box applied to polynomial evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampBounds {
    pub theta_max: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl ClampBounds {
    /// `|θ| ≤ π/2 − 10⁻³`, `r ∈ [R_Fre/2, 2 R_Ray]`.
    pub fn for_geometry(geom: &ArrayGeometry) -> Self {
        let (r_min, r_max) = match geom.field_boundaries() {
            Ok(fb) => (0.5 * fb.fresnel, 2.0 * fb.rayleigh),
            Err(_) => (1e-3, f64::INFINITY),
        };
        // Keep the clamp floor clear of the array itself.
        let reach = geom.positions().last().map_or(0.0, |p| p.abs());
        Self { theta_max: FRAC_PI_2 - 1e-3, r_min: r_min.max(1.01 * reach + 1e-9), r_max }
    }

    pub fn unbounded() -> Self {
        Self { theta_max: FRAC_PI_2 - 1e-3, r_min: 1e-9, r_max: f64::INFINITY }
    }
}

/// Which components a clamped evaluation had to pull back into range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampFlags {
    pub theta: bool,
    pub r: bool,
}

impl ClampFlags {
    pub fn any(&self) -> bool {
        self.theta || self.r
    }
}

/// Local polynomial model of angle and range over one sliding window.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPoly {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    t_origin: f64,
    time_scale: f64,
}

impl MotionPoly {
    /// Builds a model from normalized-basis coefficients.
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, t_origin: f64, time_scale: f64) -> Self {
        assert!(!alpha.is_empty() && !beta.is_empty(), "polynomial orders start at zero");
        assert!(time_scale > 0.0, "time scale must be positive");
        Self { alpha, beta, t_origin, time_scale }
    }

    /// Builds a model from physical-basis coefficients (`rad/sⁱ`, `m/sⁱ`).
    pub fn from_physical(alpha: &[f64], beta: &[f64], t_origin: f64, time_scale: f64) -> Self {
        let scale = |c: &[f64]| {
            c.iter().enumerate().map(|(i, v)| v * time_scale.powi(i as i32)).collect()
        };
        Self::new(scale(alpha), scale(beta), t_origin, time_scale)
    }

    /// Constant-position model with all higher coefficients zero.
    pub fn constant(state: PolarState, p_alpha: usize, p_beta: usize, t_origin: f64, time_scale: f64) -> Self {
        let mut alpha = vec![0.0; p_alpha + 1];
        let mut beta = vec![0.0; p_beta + 1];
        alpha[0] = state.theta;
        beta[0] = state.r;
        Self::new(alpha, beta, t_origin, time_scale)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_physical(&self) -> Vec<f64> {
        self.to_physical(&self.alpha)
    }

    pub fn beta_physical(&self) -> Vec<f64> {
        self.to_physical(&self.beta)
    }

    fn to_physical(&self, c: &[f64]) -> Vec<f64> {
        c.iter().enumerate().map(|(i, v)| v / self.time_scale.powi(i as i32)).collect()
    }

    pub fn p_alpha(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn p_beta(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.alpha.len() + self.beta.len()
    }

    pub fn t_origin(&self) -> f64 {
        self.t_origin
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Local time of a global instant.
    #[inline]
    pub fn local_time(&self, t: f64) -> f64 {
        t - self.t_origin
    }

    /// Concatenated `[α; β]` in the normalized basis.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.alpha.clone();
        p.extend_from_slice(&self.beta);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params());
        let na = self.alpha.len();
        self.alpha.copy_from_slice(&params[..na]);
        self.beta.copy_from_slice(&params[na..]);
    }

    pub(crate) fn alpha_mut(&mut self) -> &mut [f64] {
        &mut self.alpha
    }

    pub(crate) fn beta_mut(&mut self) -> &mut [f64] {
        &mut self.beta
    }

    /// Unclamped `(θ̂, r̂)` at local time `t′`.
    #[inline]
    pub fn eval_raw(&self, t_prime: f64) -> (f64, f64) {
        let tau = t_prime / self.time_scale;
        (horner(&self.alpha, tau), horner(&self.beta, tau))
    }

    /// Evaluates the model and clamps into `bounds`, reporting which
    /// components were clamped.
    pub fn eval_flagged(&self, t_prime: f64, bounds: &ClampBounds) -> (PolarState, ClampFlags) {
        let (theta, r) = self.eval_raw(t_prime);
        let mut flags = ClampFlags::default();
        let theta_c = if theta.is_nan() { 0.0 } else { theta.clamp(-bounds.theta_max, bounds.theta_max) };
        let r_c = if r.is_nan() { bounds.r_min } else { r.clamp(bounds.r_min, bounds.r_max) };
        if theta_c != theta {
            flags.theta = true;
        }
        if r_c != r {
            flags.r = true;
        }
        if flags.any() {
            debug!("clamped polynomial evaluation at t'={t_prime}: ({theta}, {r}) -> ({theta_c}, {r_c})");
        }
        (PolarState { theta: theta_c, r: r_c }, flags)
    }

    /// Clamped evaluation at local time `t′`.
    pub fn poly_eval(&self, t_prime: f64, bounds: &ClampBounds) -> PolarState {
        self.eval_flagged(t_prime, bounds).0
    }

    /// Re-anchors the window origin `delta` seconds later, so that
    /// `shifted.eval(t′) = self.eval(t′ + delta)`.
    pub fn shift(&self, delta: f64) -> MotionPoly {
        let d = delta / self.time_scale;
        MotionPoly {
            alpha: taylor_shift(&self.alpha, d),
            beta: taylor_shift(&self.beta, d),
            t_origin: self.t_origin + delta,
            time_scale: self.time_scale,
        }
    }
}

#[inline]
fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Coefficients of `p(x + d)` given those of `p(x)`.
fn taylor_shift(c: &[f64], d: f64) -> Vec<f64> {
    let mut out = c.to_vec();
    if d == 0.0 {
        return out;
    }
    let p = out.len();
    for i in 0..p {
        for j in (i..p - 1).rev() {
            out[j] += out[j + 1] * d;
        }
    }
    out
}

/// Angular sector and range annulus the user stays inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    /// Radians.
    pub theta_min: f64,
    /// Radians.
    pub theta_max: f64,
    /// Meters.
    pub r_min: f64,
    /// Meters.
    pub r_max: f64,
}

impl Region {
    pub fn contains(&self, s: PolarState) -> bool {
        s.theta >= self.theta_min && s.theta <= self.theta_max && s.r >= self.r_min && s.r <= self.r_max
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min > -FRAC_PI_2 && self.theta_max < FRAC_PI_2 && self.theta_min < self.theta_max) {
            return Err(Error::config(format!(
                "angular sector [{}, {}] must be a non-empty subset of (-pi/2, pi/2)",
                self.theta_min, self.theta_max
            )));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(Error::config(format!("range interval [{}, {}] is invalid", self.r_min, self.r_max)));
        }
        Ok(())
    }

    fn shrink(&self, dtheta: f64, dr: f64) -> Region {
        Region {
            theta_min: self.theta_min + dtheta,
            theta_max: self.theta_max - dtheta,
            r_min: self.r_min + dr,
            r_max: self.r_max - dr,
        }
    }
}

/// Parameters of the ground-truth generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthConfig {
    pub region: Region,
    /// Target average speed, m/s.
    pub avg_speed: f64,
    /// Speed ceiling, m/s.
    pub max_speed: f64,
    /// Seconds.
    pub duration: f64,
    /// Spacing of the stored samples, seconds.
    pub sample_dt: f64,
}

/// One stored ground-truth sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub theta: f64,
    pub r: f64,
    pub x: f64,
    pub y: f64,
}

/// Ground-truth trajectory, interpolated by C² splines in time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTruth {
    x: CubicSpline,
    y: CubicSpline,
    region: Region,
    avg_speed: f64,
    max_speed: f64,
    seed: Option<u64>,
}

impl TrajectoryTruth {
    /// Builds a truth from Cartesian samples on a strictly increasing time grid.
    pub fn from_samples(times: Vec<f64>, xs: Vec<f64>, ys: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if times.len() < 2 || times.len() != xs.len() || times.len() != ys.len() {
            return Err(Error::config("trajectory needs at least two consistent samples"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("trajectory times must start at 0 and increase strictly"));
        }
        let mut region = Region {
            theta_min: f64::INFINITY,
            theta_max: f64::NEG_INFINITY,
            r_min: f64::INFINITY,
            r_max: f64::NEG_INFINITY,
        };
        let x = CubicSpline::natural(times.clone(), xs);
        let y = CubicSpline::natural(times, ys);
        let mut truth = Self { x, y, region, avg_speed: 0.0, max_speed: 0.0, seed };
        let (avg, max) = truth.speed_stats(4);
        truth.avg_speed = avg;
        truth.max_speed = max;
        for s in truth.dense_states(4) {
            region.theta_min = region.theta_min.min(s.theta);
            region.theta_max = region.theta_max.max(s.theta);
            region.r_min = region.r_min.min(s.r);
            region.r_max = region.r_max.max(s.r);
        }
        truth.region = region;
        Ok(truth)
    }

    pub fn duration(&self) -> f64 {
        *self.x.knots().last().unwrap()
    }

    pub fn region(&self) -> Region {
        self.region
    }

    /// Realized average speed, m/s.
    pub fn avg_speed(&self) -> f64 {
        self.avg_speed
    }

    /// Realized maximum speed, m/s.
    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Cartesian position, unchecked.
    pub fn position(&self, t: f64) -> (f64, f64) {
        (self.x.eval(t), self.y.eval(t))
    }

    pub fn velocity(&self, t: f64) -> (f64, f64) {
        (self.x.derivative(t), self.y.derivative(t))
    }

    /// Polar state at global time `t ∈ [0, duration]`.
    pub fn truth_state(&self, t: f64) -> Result<PolarState> {
        if !(t >= 0.0 && t <= self.duration()) {
            return Err(Error::domain(format!("time {t} outside [0, {}]", self.duration())));
        }
        let (x, y) = self.position(t);
        Ok(PolarState::from_cartesian(x, y))
    }

    pub fn samples(&self) -> Vec<TruthSample> {
        self.x
            .knots()
            .iter()
            .zip(self.x.values().iter().zip(self.y.values()))
            .map(|(&t, (&x, &y))| {
                let s = PolarState::from_cartesian(x, y);
                TruthSample { t, theta: s.theta, r: s.r, x, y }
            })
            .collect()
    }

    fn dense_times(&self, per_interval: usize) -> impl Iterator<Item = f64> + '_ {
        let knots = self.x.knots();
        knots.windows(2).flat_map(move |w| {
            (0..per_interval).map(move |j| w[0] + (w[1] - w[0]) * j as f64 / per_interval as f64)
        })
        .chain(std::iter::once(*knots.last().unwrap()))
    }

    fn dense_states(&self, per_interval: usize) -> Vec<PolarState> {
        self.dense_times(per_interval)
            .map(|t| {
                let (x, y) = self.position(t);
                PolarState::from_cartesian(x, y)
            })
            .collect()
    }

    fn speed_stats(&self, per_interval: usize) -> (f64, f64) {
        let speeds: Vec<f64> = self
            .dense_times(per_interval)
            .map(|t| {
                let (vx, vy) = self.velocity(t);
                vx.hypot(vy)
            })
            .collect();
        // Trapezoid time average on the uniform dense grid.
        let n = speeds.len();
        let avg = if n > 1 {
            let inner: f64 = speeds[1..n - 1].iter().sum();
            (inner + 0.5 * (speeds[0] + speeds[n - 1])) / (n - 1) as f64
        } else {
            speeds[0]
        };
        let max = speeds.iter().cloned().fold(0.0, f64::max);
        (avg, max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in self.samples() {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "theta", "r", "x", "y"] {
            return Err(Error::config(format!("unexpected trajectory CSV header {headers:?}")));
        }
        let (mut ts, mut xs, mut ys) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.deserialize() {
            let s: TruthSample = rec?;
            ts.push(s.t);
            xs.push(s.x);
            ys.push(s.y);
        }
        Self::from_samples(ts, xs, ys, None)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

const MAX_ATTEMPTS: usize = 400;

/// Generates a C² trajectory inside `config.region` whose time-averaged speed
/// matches `avg_speed` and never exceeds `max_speed`. Pure function of
/// `(config, seed)`.
///
/// Construction: seeded waypoints joined by a clamped cubic spline, traversed
/// at a smooth time-varying speed built from random sinusoids, then sampled
/// every `sample_dt` and re-interpolated by natural cubic splines in time.
pub fn generate_truth(config: &TruthConfig, seed: u64) -> Result<TrajectoryTruth> {
    config.region.validate()?;
    if !(config.avg_speed > 0.0 && config.avg_speed < config.max_speed) {
        return Err(Error::config(format!(
            "need 0 < avg_speed < max_speed, got {} and {}",
            config.avg_speed, config.max_speed
        )));
    }
    if !(config.duration > 0.0 && config.sample_dt > 0.0 && config.sample_dt <= config.duration) {
        return Err(Error::config("duration and sample spacing must be positive"));
    }
    let region = config.region;
    let path_len = config.avg_speed * config.duration;
    let dtheta = 0.06 * (region.theta_max - region.theta_min);
    let dr = 0.06 * (region.r_max - region.r_min);
    let inner = region.shrink(dtheta, dr);
    let spacing = (path_len / 5.0).clamp(0.1, 4.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile = SpeedProfile::new(&mut rng, config);
    let n_steps = (config.duration / config.sample_dt).ceil() as usize;
    let dt = config.duration / n_steps as f64;

    for attempt in 0..MAX_ATTEMPTS {
        let Some(path) = WaypointPath::generate(&mut rng, &inner, spacing, 1.3 * path_len + 2.0 * spacing) else {
            continue;
        };
        if path.length() < path_len {
            continue;
        }
        let mut ts = Vec::with_capacity(n_steps + 1);
        let mut xs = Vec::with_capacity(n_steps + 1);
        let mut ys = Vec::with_capacity(n_steps + 1);
        for k in 0..=n_steps {
            let t = if k == n_steps { config.duration } else { k as f64 * dt };
            let (x, y) = path.point(path.param_at_length(profile.distance(t)));
            ts.push(t);
            xs.push(x);
            ys.push(y);
        }
        let truth = TrajectoryTruth::from_samples(ts, xs, ys, Some(seed))?;
        let inside = truth.dense_states(4).into_iter().all(|s| region.contains(s));
        if inside && truth.max_speed <= config.max_speed {
            debug!("trajectory accepted after {} attempts", attempt + 1);
            return Ok(truth);
        }
    }
    Err(Error::config(format!(
        "region {region:?} is too small to sustain {} m/s for {} s",
        config.avg_speed, config.duration
    )))
}

/// `v(t) = v̄ + A ψ(t)` with `ψ` a zero-mean sum of sinusoids on `[0, T]`.
struct SpeedProfile {
    avg: f64,
    amp: f64,
    comps: Vec<(f64, f64, f64)>,
    mean: f64,
}

impl SpeedProfile {
    fn new(rng: &mut ChaCha8Rng, config: &TruthConfig) -> Self {
        let comps: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| (rng.random_range(0.5..1.0), rng.random_range(0.25..1.25), rng.random_range(0.0..TAU)))
            .collect();
        let t_end = config.duration;
        let mean = comps
            .iter()
            .map(|&(c, f, p)| c * (p.cos() - (TAU * f * t_end + p).cos()) / (TAU * f * t_end))
            .sum();
        let mut prof = Self { avg: config.avg_speed, amp: 0.0, comps, mean };
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for j in 0..=20_000 {
            let v = prof.shape(t_end * j as f64 / 20_000.0);
            hi = hi.max(v);
            lo = lo.min(v);
        }
        let up = if hi > 0.0 { (0.97 * config.max_speed - config.avg_speed) / hi } else { f64::INFINITY };
        let down = if lo < 0.0 { 0.7 * config.avg_speed / -lo } else { f64::INFINITY };
        prof.amp = up.min(down);
        if !prof.amp.is_finite() {
            prof.amp = 0.0;
        }
        prof
    }

    fn shape(&self, t: f64) -> f64 {
        self.comps.iter().map(|&(c, f, p)| c * (TAU * f * t + p).sin()).sum::<f64>() - self.mean
    }

    /// Arc length travelled by time `t`.
    fn distance(&self, t: f64) -> f64 {
        let integral: f64 = self
            .comps
            .iter()
            .map(|&(c, f, p)| c * (p.cos() - (TAU * f * t + p).cos()) / (TAU * f))
            .sum();
        self.avg * t + self.amp * (integral - self.mean * t)
    }
}

/// Clamped cubic spline through waypoints, parameterized by waypoint index.
struct WaypointPath {
    x: CubicSpline,
    y: CubicSpline,
    /// Cumulative arc length at `SUBSTEPS` sub-nodes per segment.
    table: Vec<f64>,
}

const SUBSTEPS: usize = 64;
const GL_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

impl WaypointPath {
    fn generate(rng: &mut ChaCha8Rng, inner: &Region, spacing: f64, min_len: f64) -> Option<Self> {
        let theta0 = rng.random_range(inner.theta_min..inner.theta_max);
        let r0 = rng.random_range(inner.r_min..inner.r_max);
        let start = PolarState { theta: theta0, r: r0 }.to_cartesian();
        let mut pts = vec![start];
        let mut heading: f64 = rng.random_range(0.0..TAU);
        let mut chord = 0.0;
        while chord < min_len {
            let last = *pts.last().unwrap();
            let mut accepted = None;
            for attempt in 0..60 {
                let spread = if attempt < 30 { 1.0 } else { PI };
                let h = heading + rng.random_range(-spread..spread);
                let cand = (last.0 + spacing * h.cos(), last.1 + spacing * h.sin());
                if inner.contains(PolarState::from_cartesian(cand.0, cand.1)) {
                    accepted = Some((cand, h));
                    break;
                }
            }
            let (p, h) = accepted?;
            heading = h;
            pts.push(p);
            chord += spacing;
        }
        let n = pts.len();
        let knots: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let x = CubicSpline::clamped(knots.clone(), xs.clone(), xs[1] - xs[0], xs[n - 1] - xs[n - 2]);
        let y = CubicSpline::clamped(knots, ys.clone(), ys[1] - ys[0], ys[n - 1] - ys[n - 2]);
        let mut path = Self { x, y, table: Vec::with_capacity((n - 1) * SUBSTEPS + 1) };
        let mut acc = 0.0;
        path.table.push(0.0);
        let h = 1.0 / SUBSTEPS as f64;
        for j in 0..(n - 1) * SUBSTEPS {
            let a = j as f64 * h;
            acc += path.arc(a, a + h);
            path.table.push(acc);
        }
        Some(path)
    }

    fn speed(&self, s: f64) -> f64 {
        self.x.derivative(s).hypot(self.y.derivative(s))
    }

    fn arc(&self, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * self.speed(mid + half * x)).sum::<f64>() * half
    }

    fn length(&self) -> f64 {
        *self.table.last().unwrap()
    }

    fn point(&self, s: f64) -> (f64, f64) {
        (self.x.eval(s), self.y.eval(s))
    }

    /// Spline parameter at which the arc length equals `len`.
    fn param_at_length(&self, len: f64) -> f64 {
        let h = 1.0 / SUBSTEPS as f64;
        let j = self.table.partition_point(|&v| v <= len).saturating_sub(1).min(self.table.len() - 2);
        let node = j as f64 * h;
        let seg = self.table[j + 1] - self.table[j];
        let mut s = if seg > 0.0 { node + h * (len - self.table[j]) / seg } else { node };
        for _ in 0..6 {
            let f = self.table[j] + self.arc(node, s) - len;
            let step = f / self.speed(s).max(1e-12);
            s -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region() -> Region {
        Region { theta_min: -PI / 3.0, theta_max: PI / 3.0, r_min: 8.0, r_max: 80.0 }
    }

    #[test]
    fn constant_and_linear_models() {
        let m = MotionPoly::new(vec![0.3], vec![12.0], 0.0, 0.05);
        let b = ClampBounds::unbounded();
        for t in [0.0, 0.01, 0.3] {
            assert_eq!(m.poly_eval(t, &b), PolarState { theta: 0.3, r: 12.0 });
        }
        let m = MotionPoly::from_physical(&[0.0, 0.1], &[5.0], 0.0, 0.0666);
        let s = m.poly_eval(2.0, &b);
        assert!((s.theta - 0.2).abs() < 1e-12);
    }

    #[test]
    fn shift_linear_and_zero() {
        let m = MotionPoly::from_physical(&[0.2, -0.5], &[10.0, 3.0], 1.0, 0.0666);
        assert_eq!(m.shift(0.0).alpha(), m.alpha());
        let s = m.shift(0.01);
        let a = s.alpha_physical();
        assert!((a[0] - (0.2 - 0.5 * 0.01)).abs() < 1e-15);
        assert!((a[1] + 0.5).abs() < 1e-12);
        assert!((s.t_origin() - 1.01).abs() < 1e-15);
    }

    #[test]
    fn clamping_is_flagged() {
        let geom = ArrayGeometry::half_wavelength(256, 73e9).unwrap();
        let b = ClampBounds::for_geometry(&geom);
        let m = MotionPoly::new(vec![2.0], vec![1e4], 0.0, 1.0);
        let (s, f) = m.eval_flagged(0.0, &b);
        assert!(f.theta && f.r);
        assert!((s.theta - (FRAC_PI_2 - 1e-3)).abs() < 1e-15);
        assert_eq!(s.r, b.r_max);
    }

    #[test]
    fn truth_respects_speed_statistics() {
        let cfg = TruthConfig { region: region(), avg_speed: 3.11, max_speed: 4.712, duration: 4.0, sample_dt: 1e-3 };
        let truth = generate_truth(&cfg, 11).unwrap();
        assert!((3.05..=3.17).contains(&truth.avg_speed()), "{}", truth.avg_speed());
        assert!(truth.max_speed() <= 4.712);
        for s in truth.samples() {
            assert!(region().contains(PolarState { theta: s.theta, r: s.r }));
        }
    }

    #[test]
    fn truth_is_deterministic_and_seed_dependent() {
        let cfg = TruthConfig { region: region(), avg_speed: 3.11, max_speed: 4.712, duration: 1.0, sample_dt: 1e-3 };
        let a = generate_truth(&cfg, 5).unwrap().samples();
        let b = generate_truth(&cfg, 5).unwrap().samples();
        let c = generate_truth(&cfg, 6).unwrap().samples();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_region_is_config_error() {
        let tiny = Region { theta_min: 0.0, theta_max: 0.001, r_min: 10.0, r_max: 10.01 };
        let cfg = TruthConfig { region: tiny, avg_speed: 3.0, max_speed: 4.0, duration: 4.0, sample_dt: 1e-3 };
        assert!(matches!(generate_truth(&cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn bad_speeds_rejected() {
        let cfg = TruthConfig { region: region(), avg_speed: 5.0, max_speed: 4.0, duration: 1.0, sample_dt: 1e-3 };
        assert!(generate_truth(&cfg, 1).is_err());
    }

    #[test]
    fn truth_state_range_and_knots() {
        let cfg = TruthConfig { region: region(), avg_speed: 3.11, max_speed: 4.712, duration: 0.5, sample_dt: 1e-3 };
        let truth = generate_truth(&cfg, 3).unwrap();
        assert!(truth.truth_state(-1e-3).is_err());
        assert!(truth.truth_state(0.5 + 1e-9).is_err());
        for s in truth.samples().iter().step_by(37) {
            let (x, y) = truth.position(s.t);
            assert_eq!((x, y), (s.x, s.y));
        }
    }

    /// Least-squares polynomial of `order` through `(τ, v)`.
    fn lstsq(taus: &[f64], v: &[f64], order: usize) -> Vec<f64> {
        use nalgebra::{DMatrix, DVector};
        let a = DMatrix::from_fn(taus.len(), order + 1, |u, i| taus[u].powi(i as i32));
        let b = DVector::from_column_slice(v);
        a.svd(true, true).solve(&b, 1e-14).unwrap().iter().copied().collect()
    }

    /// Over one window the truth is close to a cubic in angle and an order-6
    /// polynomial in range.
    #[test]
    fn truth_is_locally_polynomial() {
        let cfg = TruthConfig { region: region(), avg_speed: 3.11, max_speed: 4.712, duration: 1.0, sample_dt: 1e-3 };
        let truth = generate_truth(&cfg, 2).unwrap();
        let h = 0.0666;
        let mut t0 = 0.0;
        while t0 + h <= 1.0 {
            let times: Vec<f64> = (0..=200).map(|i| t0 + h * i as f64 / 200.0).collect();
            let states: Vec<PolarState> = times.iter().map(|&t| truth.truth_state(t).unwrap()).collect();
            let taus: Vec<f64> = times.iter().map(|t| (t - t0) / h).collect();
            let th: Vec<f64> = states.iter().map(|s| s.theta).collect();
            let rr: Vec<f64> = states.iter().map(|s| s.r).collect();
            let m = MotionPoly::new(lstsq(&taus, &th, 3), lstsq(&taus, &rr, 6), t0, h);
            for (t, s) in times.iter().zip(&states) {
                let (a, r) = m.eval_raw(t - t0);
                assert!((a - s.theta).abs() < 1e-4, "angle at {t}: {}", a - s.theta);
                assert!((r - s.r).abs() < 1e-4, "range at {t}: {}", r - s.r);
            }
            t0 += 0.1;
        }
    }

    #[test]
    fn truth_csv_round_trip() {
        let cfg = TruthConfig { region: region(), avg_speed: 3.11, max_speed: 4.712, duration: 0.2, sample_dt: 1e-3 };
        let truth = generate_truth(&cfg, 4).unwrap();
        let mut buf = Vec::new();
        truth.write_csv(&mut buf).unwrap();
        let back = TrajectoryTruth::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples(), truth.samples());
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        fn poly() -> impl Strategy<Value = MotionPoly> {
            (prop::collection::vec(-1.0f64..1.0, 4), prop::collection::vec(-1.0f64..1.0, 7), 0.01f64..0.2)
                .prop_map(|(a, mut b, h)| {
                    b[0] += 10.0;
                    MotionPoly::new(a, b, 0.0, h)
                })
        }

        proptest! {
            #[test]
            fn shift_moves_the_origin(m in poly(), d in -0.1f64..0.1, t in -0.1f64..0.2) {
                let s = m.shift(d);
                let (a0, r0) = m.eval_raw(t + d);
                let (a1, r1) = s.eval_raw(t);
                prop_assert!((a0 - a1).abs() < 1e-9 * a0.abs().max(1.0));
                prop_assert!((r0 - r1).abs() < 1e-9 * r0.abs().max(1.0));
            }

            #[test]
            fn shifts_compose(m in poly(), d1 in -0.05f64..0.05, d2 in -0.05f64..0.05) {
                let a = m.shift(d1).shift(d2);
                let b = m.shift(d1 + d2);
                for (x, y) in a.params().iter().zip(b.params()) {
                    prop_assert!((x - y).abs() < 1e-9 * y.abs().max(1.0));
                }
                prop_assert!((a.t_origin() - b.t_origin()).abs() < 1e-15);
            }

            #[test]
            fn physical_round_trip(m in poly()) {
                let back = MotionPoly::from_physical(&m.alpha_physical(), &m.beta_physical(), 0.0, m.time_scale());
                for (x, y) in back.params().iter().zip(m.params()) {
                    prop_assert!((x - y).abs() < 1e-12 * y.abs().max(1.0));
                }
            }
        }
    }
}
