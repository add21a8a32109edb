//! The scenario file: a TOML document describing the array, the user's
//! motion, the protocol and the run matrix.
//!
//! Every section and key is optional; missing keys take the defaults of
//! [`ScenarioFile::default`], the full-size setup. Unknown keys are rejected.
//! Units are in the key names.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};
use crate::estimator::{AdamConfig, Optimizer};
use crate::harness::{PolicyKind, ProtocolConfig, RunSpec, Scenario, ScattererConfig, WarmupConfig};
use crate::policies::{CoherenceConfig, EkfConfig};
use crate::trajectory::Region;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    pub elements: usize,
    pub carrier_ghz: f64,
    /// Element spacing; half a wavelength when absent.
    pub spacing_m: Option<f64>,
}

impl Default for ArraySection {
    fn default() -> Self {
        ArraySection { elements: 256, carrier_ghz: 73.0, spacing_m: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionSection {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub r_min_m: f64,
    pub r_max_m: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        RegionSection { theta_min_deg: -60.0, theta_max_deg: 60.0, r_min_m: 8.0, r_max_m: 80.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSection {
    pub avg_speed_mps: f64,
    pub max_speed_mps: f64,
}

impl Default for MotionSection {
    fn default() -> Self {
        MotionSection { avg_speed_mps: 3.11, max_speed_mps: 4.712 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// NLoS paths besides the LoS one. Zero gives a pure LoS channel.
    pub scatterers: usize,
    /// `|p_l|` of every scatterer.
    pub reflection_magnitude: f64,
    /// Matched-filter receive SNR at the start of the trajectory.
    pub snr_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection { scatterers: 2, reflection_magnitude: 0.1, snr_db: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub symbol_time_s: f64,
    /// History window `T_H`.
    pub window_ms: f64,
    pub duration_s: f64,
    pub p_alpha: usize,
    pub p_beta: usize,
    pub optimizer: Optimizer,
    /// Use `J_min/|P|` instead of the true noise variance in the posterior.
    pub plug_in_noise: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        ProtocolSection {
            symbol_time_s: p.symbol_time,
            window_ms: p.window * 1e3,
            duration_s: p.duration,
            p_alpha: p.p_alpha,
            p_beta: p.p_beta,
            optimizer: p.optimizer,
            plug_in_noise: p.plug_in_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookSection {
    /// Angle bins; the element count when absent.
    pub angles: Option<usize>,
    pub rings: usize,
}

impl Default for CodebookSection {
    fn default() -> Self {
        CodebookSection { angles: None, rings: 8 }
    }
}

/// The run matrix: every combination of the listed values is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub intervals_ms: Vec<f64>,
    /// `K_F/K`; the count is rounded to the nearest symbol.
    pub feedback_ratios: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { intervals_ms: vec![10.0], feedback_ratios: vec![0.75], policies: vec![PolicyKind::Ts], seeds: vec![1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub name: String,
    /// Output directory; the command line and `NFTRACK_OUT` take precedence.
    pub out_dir: Option<PathBuf>,
    pub array: ArraySection,
    pub region: RegionSection,
    pub motion: MotionSection,
    pub channel: ChannelSection,
    pub protocol: ProtocolSection,
    pub adam: AdamConfig,
    pub warmup: WarmupConfig,
    pub codebook: CodebookSection,
    pub ekf: EkfConfig,
    pub coherence: CoherenceConfig,
    pub sweep: SweepSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        ScenarioFile {
            name: "default".to_string(),
            out_dir: None,
            array: ArraySection::default(),
            region: RegionSection::default(),
            motion: MotionSection::default(),
            channel: ChannelSection::default(),
            protocol: ProtocolSection::default(),
            adam: AdamConfig::default(),
            warmup: WarmupConfig::default(),
            codebook: CodebookSection::default(),
            ekf: EkfConfig::default(),
            coherence: CoherenceConfig::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Seeds of the desk preset.
pub const DESK_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

impl ScenarioFile {
    /// Parses a document, reporting the line of any schema violation.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))
    }

    /// Parses a document and then applies `key.path=value` overrides.
    /// Values are read as TOML and fall back to plain strings.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let file = Self::from_toml(text)?;
        if overrides.is_empty() {
            return Ok(file);
        }
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("scenario file: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override: {}", e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario file serializes")
    }

    /// Shrinks to the 64-element, one-second, five-seed desk setup. The
    /// range annulus moves inward so that it stays inside the smaller
    /// array's near field.
    pub fn desk_scale(&mut self) {
        self.array.elements = 64;
        self.region.r_min_m = 2.0;
        self.region.r_max_m = 8.0;
        self.protocol.duration_s = 1.0;
        self.sweep.seeds = DESK_SEEDS.to_vec();
        if !self.name.ends_with("desk") {
            self.name = format!("{}-desk", self.name);
        }
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        let carrier = self.array.carrier_ghz * 1e9;
        match self.array.spacing_m {
            Some(d) => ArrayGeometry::new(self.array.elements, carrier, d),
            None => ArrayGeometry::half_wavelength(self.array.elements, carrier),
        }
    }

    pub fn region(&self) -> Region {
        Region {
            theta_min: self.region.theta_min_deg.to_radians(),
            theta_max: self.region.theta_max_deg.to_radians(),
            r_min: self.region.r_min_m,
            r_max: self.region.r_max_m,
        }
    }

    /// Protocol for one cell of the sweep.
    pub fn protocol(&self, interval_ms: f64, feedback_ratio: f64) -> ProtocolConfig {
        let mut p = ProtocolConfig {
            symbol_time: self.protocol.symbol_time_s,
            interval: interval_ms * 1e-3,
            feedback_count: 1,
            window: self.protocol.window_ms * 1e-3,
            duration: self.protocol.duration_s,
            snr_db: self.channel.snr_db,
            p_alpha: self.protocol.p_alpha,
            p_beta: self.protocol.p_beta,
            adam: self.adam,
            optimizer: self.protocol.optimizer,
            plug_in_noise: self.protocol.plug_in_noise,
            warmup: self.warmup,
        };
        p.feedback_count = feedback_count(p.symbols_per_interval(), feedback_ratio);
        p
    }

    /// Scenario for one cell of the sweep, named after the cell.
    pub fn scenario(&self, interval_ms: f64, feedback_ratio: f64) -> Result<Scenario> {
        let geometry = self.geometry()?;
        let angles = self.codebook.angles.unwrap_or(geometry.num_elements());
        Ok(Scenario {
            name: format!("{}_dt{}_fb{}", self.name, fmt_num(interval_ms), fmt_num(100.0 * feedback_ratio)),
            geometry,
            region: self.region(),
            avg_speed: self.motion.avg_speed_mps,
            max_speed: self.motion.max_speed_mps,
            scatterers: ScattererConfig { count: self.channel.scatterers, magnitude: self.channel.reflection_magnitude },
            protocol: self.protocol(interval_ms, feedback_ratio),
            codebook_angles: angles,
            codebook_rings: self.codebook.rings,
            ekf: self.ekf,
            coherence: self.coherence,
        })
    }

    /// The full run matrix in interval, ratio, policy, seed order.
    pub fn run_specs(&self) -> Result<Vec<RunSpec>> {
        let mut specs = Vec::new();
        for &dt in &self.sweep.intervals_ms {
            for &ratio in &self.sweep.feedback_ratios {
                let scenario = self.scenario(dt, ratio)?;
                for &policy in &self.sweep.policies {
                    for &seed in &self.sweep.seeds {
                        specs.push(RunSpec {
                            id: format!("{}_{}_{}", scenario.name, policy.as_str(), seed),
                            scenario: scenario.clone(),
                            policy,
                            seed,
                        });
                    }
                }
            }
        }
        Ok(specs)
    }

    /// Every schema-level and physical violation, without running anything.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let geom = match self.geometry() {
            Ok(g) => Some(g),
            Err(e) => {
                v.push(format!("array: {e}"));
                None
            }
        };
        let region = self.region();
        if let Err(e) = region.validate() {
            v.push(format!("region: {e}"));
        }
        if let Some(geom) = &geom {
            match geom.field_boundaries() {
                Ok(fb) => {
                    if !(region.r_min > fb.fresnel) {
                        v.push(format!(
                            "region: r_min_m = {} is not beyond the Fresnel distance {:.3} m",
                            region.r_min, fb.fresnel
                        ));
                    }
                    if !(region.r_max < fb.rayleigh) {
                        v.push(format!(
                            "region: r_max_m = {} exceeds the Rayleigh distance {:.3} m",
                            region.r_max, fb.rayleigh
                        ));
                    }
                }
                Err(e) => v.push(format!("array: {e}")),
            }
        }
        let m = &self.motion;
        if !(m.avg_speed_mps > 0.0 && m.avg_speed_mps < m.max_speed_mps) {
            v.push(format!("motion: need 0 < avg_speed_mps < max_speed_mps, got {} and {}", m.avg_speed_mps, m.max_speed_mps));
        }
        if !(self.channel.reflection_magnitude >= 0.0) {
            v.push("channel: reflection_magnitude must be non-negative".to_string());
        }
        if self.codebook.angles == Some(0) || self.codebook.rings == 0 {
            v.push("codebook: angles and rings must be at least 1".to_string());
        }
        if let Err(e) = self.ekf.validate() {
            v.push(format!("ekf: {e}"));
        }
        if let Err(e) = self.coherence.validate() {
            v.push(format!("coherence: {e}"));
        }
        let s = &self.sweep;
        for (name, empty) in [
            ("intervals_ms", s.intervals_ms.is_empty()),
            ("feedback_ratios", s.feedback_ratios.is_empty()),
            ("policies", s.policies.is_empty()),
            ("seeds", s.seeds.is_empty()),
        ] {
            if empty {
                v.push(format!("sweep: {name} is empty"));
            }
        }
        for &ratio in &s.feedback_ratios {
            if !(ratio > 0.0 && ratio <= 1.0) {
                v.push(format!("sweep: feedback ratio {ratio} outside (0, 1]"));
            }
        }
        for &dt in &s.intervals_ms {
            for &ratio in &s.feedback_ratios {
                for e in self.protocol(dt, ratio).violations() {
                    let line = format!("protocol (interval {dt} ms, ratio {ratio}): {e}");
                    if !v.contains(&line) {
                        v.push(line);
                    }
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("\n")))
        }
    }
}

/// `K_F` for a feedback ratio, at least one symbol.
pub fn feedback_count(k: usize, ratio: f64) -> usize {
    ((ratio * k as f64).round() as usize).clamp(1, k.max(1))
}

/// Shortest decimal form, for names: `10`, `2.5`.
pub(crate) fn fmt_num(x: f64) -> String {
    let s = format!("{x}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override key `{path}` is malformed")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{k}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
