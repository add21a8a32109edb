//! The tracking protocol: warm-up, per-symbol transmission with scheduled
//! feedback, periodic re-estimation, metrics and parallel sweeps.

mod protocol;
mod sweep;
mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{los_channel, ArrayGeometry, PolarState, Scatterer};
use crate::error::{Error, Result};
use crate::estimator::{AdamConfig, Optimizer};
use crate::policies::{CoherenceConfig, EkfConfig};
use crate::trajectory::{generate_truth, Region, TrajectoryTruth, TruthConfig};

pub use protocol::{run_tracking, warmup, Warmup};
pub use sweep::{run_sweep, RunSpec, SweepResult};
pub use trace::{read_summaries, read_symbols, summarize, write_summaries, IntervalRecord, RunSummary, RunTrace, SymbolRecord};

/// Independent random streams drawn from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Noise = 1,
    Policy = 2,
    Dither = 3,
    Scatterers = 4,
}

pub(crate) fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Warm-up beam dither around the true trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarmupConfig {
    /// Angle dither standard deviation, degrees.
    pub angle_dither_deg: f64,
    /// Range dither standard deviation as a fraction of range.
    pub range_dither_rel: f64,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        WarmupConfig { angle_dither_deg: 0.5, range_dither_rel: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Thompson-sampled probes on feedback symbols, exploitation otherwise.
    Ts,
    Exploit,
    /// Exploitation with the belief pinned to the true LoS state.
    Genie,
    Ekf,
    Coherence,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Ts => "ts",
            PolicyKind::Exploit => "exploit",
            PolicyKind::Genie => "genie",
            PolicyKind::Ekf => "ekf",
            PolicyKind::Coherence => "coherence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ts" => Ok(PolicyKind::Ts),
            "exploit" => Ok(PolicyKind::Exploit),
            "genie" => Ok(PolicyKind::Genie),
            "ekf" => Ok(PolicyKind::Ekf),
            "coherence" => Ok(PolicyKind::Coherence),
            _ => Err(Error::config(format!("unknown policy `{s}`"))),
        }
    }

    pub fn uses_mle(self) -> bool {
        matches!(self, PolicyKind::Ts | PolicyKind::Exploit)
    }
}

/// Timing and estimation parameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// `T_s`, seconds.
    pub symbol_time: f64,
    /// `ΔT`, seconds.
    pub interval: f64,
    /// `K_F`, feedback symbols per interval.
    pub feedback_count: usize,
    /// `T_H`, seconds.
    pub window: f64,
    /// `T`, seconds.
    pub duration: f64,
    pub snr_db: f64,
    pub p_alpha: usize,
    pub p_beta: usize,
    pub adam: AdamConfig,
    pub optimizer: Optimizer,
    /// Replace the known `σ²` by `J_min/|P_m|` in the posterior.
    pub plug_in_noise: bool,
    pub warmup: WarmupConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            symbol_time: 1.0 / 30_000.0,
            interval: 0.01,
            feedback_count: 225,
            window: 0.0666,
            duration: 4.0,
            snr_db: 20.0,
            p_alpha: 3,
            p_beta: 6,
            adam: AdamConfig::default(),
            optimizer: Optimizer::Adam,
            plug_in_noise: false,
            warmup: WarmupConfig::default(),
        }
    }
}

/// `n` symbols of length `ts` must tile `span` to within this fraction of a symbol.
const TILING_TOL: f64 = 1e-6;

fn symbols_in(span: f64, ts: f64) -> Option<usize> {
    let n = span / ts;
    let r = n.round();
    ((n - r).abs() < TILING_TOL * n.max(1.0) && r >= 1.0).then_some(r as usize)
}

impl ProtocolConfig {
    /// Symbols per interval, `K = ΔT/T_s`.
    pub fn symbols_per_interval(&self) -> usize {
        symbols_in(self.interval, self.symbol_time).unwrap_or(1)
    }

    /// Symbols in the warm-up window.
    pub fn warmup_symbols(&self) -> usize {
        (self.window / self.symbol_time).round() as usize
    }

    /// Symbols in the whole run, `T/T_s`.
    pub fn total_symbols(&self) -> usize {
        (self.duration / self.symbol_time).round() as usize
    }

    /// All violated constraints.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.symbol_time > 0.0) {
            v.push("symbol_time must be positive".to_string());
            return v;
        }
        match symbols_in(self.interval, self.symbol_time) {
            None => v.push(format!(
                "interval {} s is not an integer number of {} s symbols",
                self.interval, self.symbol_time
            )),
            Some(k) => {
                if self.feedback_count < 2 || self.feedback_count > k {
                    v.push(format!("feedback count {} must lie in [2, K = {k}]", self.feedback_count));
                }
            }
        }
        if !(self.window >= self.interval) {
            v.push(format!("window {} s is shorter than the interval {} s", self.window, self.interval));
        }
        if !(self.duration > self.window) {
            v.push(format!("duration {} s must exceed the window {} s", self.duration, self.window));
        }
        if !self.snr_db.is_finite() {
            v.push("snr_db must be finite".to_string());
        }
        if let Err(e) = self.adam.validate() {
            v.push(e.to_string());
        }
        if !(self.warmup.angle_dither_deg >= 0.0 && self.warmup.range_dither_rel >= 0.0) {
            v.push("warm-up dither must be non-negative".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

/// Feedback positions `{1 + ⌊(i−1)(K−1)/(K_F−1)⌋}` within an interval,
/// 1-based. `K_F = 1` gives `{1}`.
pub fn feedback_positions(k: usize, k_f: usize) -> Result<Vec<usize>> {
    if k == 0 || k_f == 0 || k_f > k {
        return Err(Error::config(format!("need 1 ≤ K_F ≤ K, got K = {k}, K_F = {k_f}")));
    }
    if k_f == 1 {
        return Ok(vec![1]);
    }
    let mut out: Vec<usize> = (1..=k_f).map(|i| 1 + (i - 1) * (k - 1) / (k_f - 1)).collect();
    out.dedup();
    Ok(out)
}

/// Receive-noise variance giving `snr_db` for matched filtering at `initial`.
pub fn snr_to_noise_var(snr_db: f64, geom: &ArrayGeometry, initial: PolarState) -> Result<f64> {
    Ok(los_channel(geom, initial)?.norm_sqr() / 10f64.powf(snr_db / 10.0))
}

/// Static reflectors placed uniformly at random in the region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScattererConfig {
    /// Number of NLoS paths, `L − 1`.
    pub count: usize,
    /// `|p_l|`.
    pub magnitude: f64,
}

impl Default for ScattererConfig {
    fn default() -> Self {
        ScattererConfig { count: 2, magnitude: 0.1 }
    }
}

pub fn place_scatterers(cfg: &ScattererConfig, region: &Region, seed: u64) -> Vec<Scatterer> {
    let mut rng = stream(seed, Stream::Scatterers);
    (0..cfg.count)
        .map(|_| {
            let theta = rng.random_range(region.theta_min..=region.theta_max);
            let range = rng.random_range(region.r_min..=region.r_max);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            Scatterer { theta, range, reflection: num_complex::Complex64::from_polar(cfg.magnitude, phase) }
        })
        .collect()
}

/// Everything needed to run any policy on any seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub geometry: ArrayGeometry,
    pub region: Region,
    pub avg_speed: f64,
    pub max_speed: f64,
    pub scatterers: ScattererConfig,
    pub protocol: ProtocolConfig,
    pub codebook_angles: usize,
    pub codebook_rings: usize,
    pub ekf: EkfConfig,
    pub coherence: CoherenceConfig,
}

impl Scenario {
    pub fn truth(&self, seed: u64) -> Result<TrajectoryTruth> {
        let cfg = TruthConfig {
            region: self.region,
            avg_speed: self.avg_speed,
            max_speed: self.max_speed,
            duration: self.protocol.duration,
            sample_dt: 2e-3,
        };
        generate_truth(&cfg, seed)
    }

    pub fn scatterers(&self, seed: u64) -> Vec<Scatterer> {
        place_scatterers(&self.scatterers, &self.region, seed)
    }
}
