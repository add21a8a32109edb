use std::collections::VecDeque;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{full_channel, inner, normalized_gain, ArrayGeometry, PolarState, Scatterer};
use crate::error::{Error, Result};
use crate::estimator::{acquire_phase, cost, fit, observed_fim, posterior, resolve_cycles, FitDiagnostics, Observation, PosteriorBelief};
use crate::policies::{
    build_codebook, exploit_beam, ts_beam, Beamformer, CoherenceTracker, EkfTracker, Provenance, SweepPolicy,
};
use crate::trajectory::{ClampBounds, MotionPoly, TrajectoryTruth};

use super::trace::{IntervalRecord, RunTrace, SymbolRecord};
use super::{feedback_positions, snr_to_noise_var, stream, PolicyKind, ProtocolConfig, Scenario, Stream};

/// Gain below which a whole interval counts as lost track.
const TRACK_LOSS_GAIN: f64 = 0.01;
/// A warm-up fit whose cost exceeds this multiple of the noise floor has not
/// locked onto the carrier phase.
const WARMUP_COST_FACTOR: f64 = 10.0;
/// Re-acquire the carrier phase when a warm-started fit ends this far above
/// the noise floor.
const RELOCK_COST_FACTOR: f64 = 1.5;
/// Half-width of the re-lock angle scan, in beamwidths.
const RELOCK_BEAMWIDTHS: f64 = 3.0;

/// The simulated downlink: channel synthesis, noise and gain bookkeeping.
struct Air<'a> {
    truth: &'a TrajectoryTruth,
    geom: &'a ArrayGeometry,
    scatterers: &'a [Scatterer],
    noise_std: f64,
    noise: ChaCha8Rng,
    symbol_time: f64,
}

struct Sent {
    received: Complex64,
    gain: f64,
    truth: PolarState,
}

impl Air<'_> {
    fn time(&self, u: usize) -> f64 {
        u as f64 * self.symbol_time
    }

    fn truth_at(&self, u: usize) -> Result<PolarState> {
        self.truth.truth_state(self.time(u))
    }

    /// Transmits `x = 1` on `beam` during symbol `u`. Exactly one noise
    /// sample is drawn per symbol, so all policies see the same noise.
    fn send(&mut self, u: usize, beam: &[Complex64]) -> Result<Sent> {
        let truth = self.truth_at(u)?;
        let h = full_channel(self.geom, truth, self.scatterers)?;
        let n = Complex64::new(
            self.noise.sample::<f64, _>(StandardNormal),
            self.noise.sample::<f64, _>(StandardNormal),
        ) * self.noise_std;
        Ok(Sent { received: inner(&h.0, beam) + n, gain: normalized_gain(&h, beam), truth })
    }
}

fn record(u: usize, t: f64, sent: &Sent, aim: PolarState, provenance: Provenance, fed_back: bool) -> SymbolRecord {
    SymbolRecord {
        u: u as u64,
        t,
        theta_true: sent.truth.theta,
        r_true: sent.truth.r,
        theta_hat: aim.theta,
        r_hat: aim.r,
        provenance,
        gain: sent.gain,
        fed_back,
    }
}

/// Output of the warm-up phase.
#[derive(Debug, Clone)]
pub struct Warmup {
    pub window: Vec<Observation>,
    pub model: MotionPoly,
    pub diagnostics: FitDiagnostics,
    pub records: Vec<SymbolRecord>,
}

fn noise_floor(n: usize, noise_var: f64) -> f64 {
    n as f64 * noise_var
}

fn run_warmup(air: &mut Air<'_>, config: &ProtocolConfig, dither: &mut ChaCha8Rng, noise_var: f64) -> Result<Warmup> {
    let geom = air.geom;
    let k = config.symbols_per_interval();
    let positions = feedback_positions(k, config.feedback_count)?;
    let w = config.warmup_symbols();
    let sd_theta = config.warmup.angle_dither_deg.to_radians();
    let sd_r = config.warmup.range_dither_rel;
    let bounds = ClampBounds::for_geometry(geom);
    let perturb = |s: PolarState, rng: &mut ChaCha8Rng| PolarState {
        theta: (s.theta + sd_theta * rng.sample::<f64, _>(StandardNormal)).clamp(-bounds.theta_max, bounds.theta_max),
        r: (s.r * (1.0 + sd_r * rng.sample::<f64, _>(StandardNormal))).clamp(bounds.r_min, bounds.r_max),
    };
    let mut window = Vec::new();
    let mut records = Vec::with_capacity(w);
    for u in 0..w {
        let t = air.time(u);
        let aim = perturb(air.truth_at(u)?, dither);
        let beam = Beamformer::towards(geom, aim, Provenance::Warmup);
        let sent = air.send(u, &beam.weights)?;
        let fed_back = positions.binary_search(&(u % k + 1)).is_ok();
        records.push(record(u, t, &sent, aim, Provenance::Warmup, fed_back));
        if fed_back {
            window.push(Observation { index: u as u64, time: t, beam: beam.weights, received: sent.received });
        }
    }
    // The position at t = 0 is known up to the same dither as the beams.
    let start = perturb(air.truth_at(0)?, dither);
    let init = scan_angle(
        &MotionPoly::constant(start, config.p_alpha, config.p_beta, 0.0, config.window),
        geom,
        &window,
        3.0 * sd_theta,
    );
    let span = 4.0 * sd_r * start.r + geom.wavelength();
    let mut adam = config.adam;
    adam.max_iters *= 4;
    // Lock the carrier phase and fit, settle the wavelength ambiguity with the
    // angle track in place, then refit.
    let (coarse, first) = fit(&init, geom, &window, config.optimizer, &adam);
    let resolved = acquire_phase(&resolve_cycles(&coarse, geom, &window, span), geom, &window);
    let (mut model, mut diagnostics) = fit(&resolved, geom, &window, config.optimizer, &adam);
    diagnostics.iterations += first.iterations;
    let floor = noise_floor(window.len(), noise_var);
    let unlocked = |d: &FitDiagnostics| d.final_cost > WARMUP_COST_FACTOR * floor.max(f64::MIN_POSITIVE) && noise_var > 0.0;
    if unlocked(&diagnostics) {
        let (m, d) = relock(&model, geom, &window, config);
        let iterations = diagnostics.iterations + d.iterations;
        if d.final_cost < diagnostics.final_cost {
            (model, diagnostics) = (m, d);
        }
        diagnostics.iterations = iterations;
    }
    if unlocked(&diagnostics) {
        return Err(Error::Runtime(format!(
            "warm-up fit did not lock: cost {:.3e} against noise floor {:.3e} after {} iterations",
            diagnostics.final_cost, floor, diagnostics.iterations
        )));
    }
    Ok(Warmup { window, model, diagnostics, records })
}

/// Collects the warm-up window with dithered genie beams and fits the first
/// model. Uses the dither and noise streams of `seed`.
pub fn warmup(
    truth: &TrajectoryTruth,
    geom: &ArrayGeometry,
    scatterers: &[Scatterer],
    config: &ProtocolConfig,
    seed: u64,
) -> Result<Warmup> {
    config.validate()?;
    let noise_var = snr_to_noise_var(config.snr_db, geom, truth.truth_state(0.0)?)?;
    let mut air = Air {
        truth,
        geom,
        scatterers,
        noise_std: (noise_var / 2.0).sqrt(),
        noise: stream(seed, Stream::Noise),
        symbol_time: config.symbol_time,
    };
    run_warmup(&mut air, config, &mut stream(seed, Stream::Dither), noise_var)
}

fn belief_from_fit(
    model: MotionPoly,
    geom: &ArrayGeometry,
    window: &[Observation],
    noise_var: f64,
    plug_in: bool,
    diagnostics: FitDiagnostics,
) -> Result<PosteriorBelief> {
    let var = if plug_in && !window.is_empty() {
        (diagnostics.final_cost / window.len() as f64).max(f64::MIN_POSITIVE)
    } else {
        noise_var
    };
    let (fa, fb) = observed_fim(&model, geom, window, var);
    posterior(model, &fa, &fb, var, diagnostics)
}

/// Runs one policy over the whole trajectory.
pub fn run_tracking(
    truth: &TrajectoryTruth,
    scenario: &Scenario,
    scatterers: &[Scatterer],
    policy: PolicyKind,
    seed: u64,
) -> Result<RunTrace> {
    let config = &scenario.protocol;
    config.validate()?;
    let geom = &scenario.geometry;
    let total = config.total_symbols();
    if truth.duration() + 1e-12 < (total - 1) as f64 * config.symbol_time {
        return Err(Error::config("trajectory is shorter than the run"));
    }
    let noise_var = snr_to_noise_var(config.snr_db, geom, truth.truth_state(0.0)?)?;
    let mut air = Air {
        truth,
        geom,
        scatterers,
        noise_std: (noise_var / 2.0).sqrt(),
        noise: stream(seed, Stream::Noise),
        symbol_time: config.symbol_time,
    };
    let mut trace = RunTrace {
        scenario: scenario.name.clone(),
        policy,
        seed,
        interval: config.interval,
        feedback_count: config.feedback_count,
        symbols_per_interval: config.symbols_per_interval(),
        symbols: Vec::with_capacity(total),
        intervals: Vec::new(),
        track_loss: None,
        clamp_events: 0,
    };
    let first_block = match policy {
        PolicyKind::Ts | PolicyKind::Exploit => {
            run_mle(&mut air, config, policy, noise_var, seed, &mut trace)?;
            config.warmup_symbols()
        }
        PolicyKind::Genie => {
            for u in 0..total {
                let aim = air.truth_at(u)?;
                let beam = Beamformer::towards(geom, aim, Provenance::Exploit);
                let sent = air.send(u, &beam.weights)?;
                trace.symbols.push(record(u, air.time(u), &sent, aim, Provenance::Exploit, false));
            }
            0
        }
        PolicyKind::Ekf | PolicyKind::Coherence => {
            let codebook =
                Arc::new(build_codebook(geom, &scenario.region, scenario.codebook_angles, scenario.codebook_rings)?);
            let mut tracker: Box<dyn SweepPolicy> = if policy == PolicyKind::Ekf {
                Box::new(EkfTracker::new(geom.clone(), codebook, scenario.ekf))
            } else {
                Box::new(CoherenceTracker::new(geom.clone(), codebook, scenario.coherence, config.symbol_time))
            };
            for u in 0..total {
                let t = air.time(u);
                let beam = tracker.next_beam(t);
                let sent = air.send(u, &beam.weights)?;
                let fed_back = beam.provenance == Provenance::Sweep;
                if fed_back {
                    tracker.feedback(t, sent.received);
                }
                let aim = tracker.estimate(t).unwrap_or(PolarState { theta: f64::NAN, r: f64::NAN });
                trace.symbols.push(record(u, t, &sent, aim, beam.provenance, fed_back));
            }
            0
        }
    };
    trace.track_loss = detect_track_loss(&trace.symbols, first_block, config.symbols_per_interval());
    Ok(trace)
}

fn detect_track_loss(symbols: &[SymbolRecord], start: usize, k: usize) -> Option<f64> {
    symbols
        .get(start..)?
        .chunks_exact(k)
        .find(|block| block.iter().all(|s| s.gain < TRACK_LOSS_GAIN))
        .map(|block| block[0].t)
}

/// Phase-locked starts every half beamwidth within `half_span` of the
/// model's angle; returns the cheapest. Gradient fits do not cross the
/// sidelobes of the beam pattern, so a start more than about a beamwidth off
/// needs this.
fn scan_angle(model: &MotionPoly, geom: &ArrayGeometry, obs: &[Observation], half_span: f64) -> MotionPoly {
    let step = 1.0 / geom.num_elements() as f64;
    let n = (half_span / step).ceil() as i64;
    let mut best = (acquire_phase(model, geom, obs), f64::INFINITY);
    for i in -n..=n {
        let mut start = model.clone();
        let mut p = start.params();
        p[0] += i as f64 * step;
        start.set_params(&p);
        let locked = acquire_phase(&start, geom, obs);
        let c = cost(&locked, geom, obs);
        if c < best.1 {
            best = (locked, c);
        }
    }
    best.0
}

/// Restarts a fit that ended far above the noise floor from the best
/// phase-locked angle within a few beamwidths of it.
fn relock(fitted: &MotionPoly, geom: &ArrayGeometry, obs: &[Observation], config: &ProtocolConfig) -> (MotionPoly, FitDiagnostics) {
    let half_span = RELOCK_BEAMWIDTHS * 2.0 / geom.num_elements() as f64;
    fit(&scan_angle(fitted, geom, obs, half_span), geom, obs, config.optimizer, &config.adam)
}

fn run_mle(
    air: &mut Air<'_>,
    config: &ProtocolConfig,
    policy: PolicyKind,
    noise_var: f64,
    seed: u64,
    trace: &mut RunTrace,
) -> Result<()> {
    let geom = air.geom;
    let bounds = ClampBounds::for_geometry(geom);
    let mut rng = stream(seed, Stream::Policy);
    let start = run_warmup(air, config, &mut stream(seed, Stream::Dither), noise_var)?;
    trace.symbols.extend(start.records);
    let mut window: VecDeque<Observation> = start.window.into();
    let mut belief = belief_from_fit(
        start.model,
        geom,
        window.make_contiguous(),
        noise_var,
        config.plug_in_noise,
        start.diagnostics,
    )?;

    let k = config.symbols_per_interval();
    let positions = feedback_positions(k, config.feedback_count)?;
    let total = config.total_symbols();
    let w = config.warmup_symbols();
    let intervals = total.saturating_sub(w) / k;

    for m in 1..=intervals + 1 {
        let first = w + (m - 1) * k;
        let last = (first + k).min(total);
        if first >= last {
            break;
        }
        for u in first..last {
            let t = air.time(u);
            let t_prime = belief.mean.local_time(t);
            let fed_back = m <= intervals && positions.binary_search(&(u - first + 1)).is_ok();
            let (aim, flags) = belief.mean.eval_flagged(t_prime, &bounds);
            if flags.any() {
                trace.clamp_events += 1;
            }
            let beam = if policy == PolicyKind::Ts && fed_back {
                ts_beam(&belief, geom, t_prime, &mut rng)
            } else {
                exploit_beam(&belief, geom, t_prime)
            };
            let sent = air.send(u, &beam.weights)?;
            trace.symbols.push(record(u, t, &sent, aim, beam.provenance, fed_back));
            if fed_back {
                window.push_back(Observation { index: u as u64, time: t, beam: beam.weights, received: sent.received });
            }
        }
        if m > intervals {
            break;
        }
        // Keep the observations of [t_m − T_H, t_m].
        let t_end = air.time(last);
        let oldest = t_end - config.window - 0.5 * config.symbol_time;
        while window.front().is_some_and(|o| o.time < oldest) {
            window.pop_front();
        }
        let obs = window.make_contiguous();
        let init = belief.mean.shift(config.interval);
        let (mut fitted, mut diag) = fit(&init, geom, obs, config.optimizer, &config.adam);
        let floor = noise_floor(obs.len(), noise_var);
        let mut reacquired = false;
        if diag.final_cost > RELOCK_COST_FACTOR * floor {
            let (fit2, diag2) = relock(&fitted, geom, obs, config);
            if diag2.final_cost < diag.final_cost {
                fitted = fit2;
                diag = FitDiagnostics { iterations: diag.iterations + diag2.iterations, ..diag2 };
                reacquired = true;
            }
        }
        let (cost, iterations, converged) = (diag.final_cost, diag.iterations, diag.converged);
        belief = belief_from_fit(fitted, geom, obs, noise_var, config.plug_in_noise, diag)?;
        trace.intervals.push(IntervalRecord {
            m,
            t_end,
            observations: obs.len(),
            cost,
            iterations,
            converged,
            reacquired,
            trace_cov_alpha: belief.cov_alpha.trace(),
            trace_cov_beta: belief.cov_beta.trace(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{summarize, ScattererConfig};
    use crate::trajectory::Region;

    fn scenario(scatterers: usize) -> Scenario {
        Scenario {
            name: "t".into(),
            geometry: ArrayGeometry::half_wavelength(64, 73e9).unwrap(),
            region: Region { theta_min: -1.0, theta_max: 1.0, r_min: 2.0, r_max: 8.0 },
            avg_speed: 3.11,
            max_speed: 4.712,
            scatterers: ScattererConfig { count: scatterers, magnitude: 0.1 },
            protocol: ProtocolConfig { duration: 0.2, ..ProtocolConfig::default() },
            codebook_angles: 64,
            codebook_rings: 8,
            ekf: Default::default(),
            coherence: Default::default(),
        }
    }

    fn run(sc: &Scenario, policy: PolicyKind, seed: u64) -> RunTrace {
        let truth = sc.truth(seed).unwrap();
        run_tracking(&truth, sc, &sc.scatterers(seed), policy, seed).unwrap()
    }

    #[test]
    fn genie_is_perfect_in_line_of_sight() {
        let sc = scenario(0);
        let t = run(&sc, PolicyKind::Genie, 3);
        assert_eq!(t.symbols.len(), sc.protocol.total_symbols());
        assert!(t.symbols.iter().all(|s| (s.gain - 1.0).abs() < 1e-12));
    }

    #[test]
    fn every_policy_records_every_symbol() {
        let sc = scenario(2);
        for p in [PolicyKind::Ts, PolicyKind::Exploit, PolicyKind::Ekf, PolicyKind::Coherence, PolicyKind::Genie] {
            let t = run(&sc, p, 1);
            assert_eq!(t.symbols.len(), sc.protocol.total_symbols(), "{p:?}");
            assert!(t.symbols.windows(2).all(|w| w[1].t > w[0].t));
            assert!(t.symbols.iter().all(|s| (0.0..=1.0).contains(&s.gain)));
        }
    }

    #[test]
    fn mle_runs_fit_once_per_interval() {
        let sc = scenario(2);
        let t = run(&sc, PolicyKind::Ts, 2);
        let p = &sc.protocol;
        let intervals = (p.total_symbols() - p.warmup_symbols()) / p.symbols_per_interval();
        assert_eq!(t.intervals.len(), intervals);
        let fed = t.symbols.iter().filter(|s| s.fed_back).count();
        let warm = feedback_positions(p.symbols_per_interval(), p.feedback_count).unwrap().len();
        assert!(fed >= intervals * warm);
        let s = summarize(&t).unwrap();
        assert!(s.mean_gain > 0.5, "{}", s.mean_gain);
    }

    #[test]
    fn runs_repeat_bit_for_bit() {
        let sc = scenario(2);
        for p in [PolicyKind::Ts, PolicyKind::Ekf] {
            let mut a = Vec::new();
            let mut b = Vec::new();
            run(&sc, p, 4).write_csv(&mut a).unwrap();
            run(&sc, p, 4).write_csv(&mut b).unwrap();
            assert_eq!(a, b, "{p:?}");
            let mut c = Vec::new();
            run(&sc, p, 5).write_csv(&mut c).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn warmup_is_repeatable_and_starts_on_track() {
        let sc = crate::cli::ScenarioFile::default().scenario(10.0, 0.75).unwrap();
        let bounds = ClampBounds::for_geometry(&sc.geometry);
        let end = sc.protocol.window;
        for seed in 1..=5 {
            let truth = sc.truth(seed).unwrap();
            let scat = sc.scatterers(seed);
            let a = warmup(&truth, &sc.geometry, &scat, &sc.protocol, seed).unwrap();
            let b = warmup(&truth, &sc.geometry, &scat, &sc.protocol, seed).unwrap();
            assert!(a.window.iter().zip(&b.window).all(|(x, y)| x.received == y.received && x.beam == y.beam));
            assert_eq!(a.model.params(), b.model.params());
            let est = a.model.poly_eval(a.model.local_time(end), &bounds);
            let err = (est.theta - truth.truth_state(end).unwrap().theta).abs().to_degrees();
            assert!(err < 0.1, "seed {seed}: {err} deg");
        }
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let sc = scenario(0);
        let truth = Scenario { protocol: ProtocolConfig { duration: 0.1, ..sc.protocol.clone() }, ..sc.clone() }.truth(1).unwrap();
        assert!(run_tracking(&truth, &sc, &[], PolicyKind::Genie, 1).is_err());
    }
}
