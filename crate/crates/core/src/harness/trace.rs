use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::Provenance;

use super::PolicyKind;

/// One transmitted symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub u: u64,
    pub t: f64,
    pub theta_true: f64,
    pub r_true: f64,
    pub theta_hat: f64,
    pub r_hat: f64,
    pub provenance: Provenance,
    pub gain: f64,
    pub fed_back: bool,
}

/// One re-estimation at the end of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub m: usize,
    pub t_end: f64,
    pub observations: usize,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reacquired: bool,
    pub trace_cov_alpha: f64,
    pub trace_cov_beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scenario: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub interval: f64,
    pub feedback_count: usize,
    /// `K`.
    pub symbols_per_interval: usize,
    pub symbols: Vec<SymbolRecord>,
    pub intervals: Vec<IntervalRecord>,
    /// Start of the first interval whose gain stayed below the loss threshold.
    pub track_loss: Option<f64>,
    /// Predicted states that had to be clamped into the validity box.
    pub clamp_events: usize,
}

impl RunTrace {
    /// `{scenario}_{policy}_{seed}.csv`
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.csv", self.scenario, self.policy.as_str(), self.seed)
    }

    pub fn gains(&self) -> Vec<f64> {
        self.symbols.iter().map(|s| s.gain).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.symbols {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join(self.file_name());
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        Ok(path)
    }

    pub fn write_intervals_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.intervals {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads the per-symbol rows written by [`RunTrace::write_csv`].
pub fn read_symbols<R: Read>(reader: R) -> Result<Vec<SymbolRecord>> {
    csv::Reader::from_reader(reader).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub interval_ms: f64,
    pub feedback_count: usize,
    /// `K_F/K`.
    pub feedback_ratio: f64,
    pub symbols: usize,
    pub mean_gain: f64,
    pub min_gain: f64,
    /// Mean gain over the second half of the run.
    pub final_half_gain: f64,
    pub track_loss: bool,
    pub track_loss_time: Option<f64>,
    pub clamp_events: usize,
    pub mle_intervals: usize,
    pub mean_cost: f64,
    pub mean_iterations: f64,
}

pub fn summarize(trace: &RunTrace) -> Result<RunSummary> {
    if trace.symbols.is_empty() {
        return Err(Error::Runtime("cannot summarize an empty trace".into()));
    }
    let n = trace.symbols.len();
    let mean = |s: &[SymbolRecord]| s.iter().map(|r| r.gain).sum::<f64>() / s.len() as f64;
    let nm = trace.intervals.len();
    let (mean_cost, mean_iterations) = if nm == 0 {
        (0.0, 0.0)
    } else {
        (
            trace.intervals.iter().map(|r| r.cost).sum::<f64>() / nm as f64,
            trace.intervals.iter().map(|r| r.iterations as f64).sum::<f64>() / nm as f64,
        )
    };
    Ok(RunSummary {
        scenario: trace.scenario.clone(),
        policy: trace.policy,
        seed: trace.seed,
        interval_ms: trace.interval * 1e3,
        feedback_count: trace.feedback_count,
        feedback_ratio: trace.feedback_count as f64 / trace.symbols_per_interval.max(1) as f64,
        symbols: n,
        mean_gain: mean(&trace.symbols),
        min_gain: trace.symbols.iter().map(|r| r.gain).fold(f64::INFINITY, f64::min),
        final_half_gain: mean(&trace.symbols[n / 2..]),
        track_loss: trace.track_loss.is_some(),
        track_loss_time: trace.track_loss,
        clamp_events: trace.clamp_events,
        mle_intervals: nm,
        mean_cost,
        mean_iterations,
    })
}

pub fn write_summaries<W: Write>(rows: &[RunSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summaries<R: Read>(reader: R) -> Result<Vec<RunSummary>> {
    csv::Reader::from_reader(reader).deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(gains: &[f64]) -> RunTrace {
        RunTrace {
            scenario: "t".into(),
            policy: PolicyKind::Exploit,
            seed: 3,
            interval: 0.01,
            feedback_count: 1,
            symbols_per_interval: 10,
            symbols: gains
                .iter()
                .enumerate()
                .map(|(u, &g)| SymbolRecord {
                    u: u as u64,
                    t: u as f64 * 1e-3,
                    theta_true: 0.1 + u as f64 / 3.0,
                    r_true: 5.0,
                    theta_hat: 0.1,
                    r_hat: std::f64::consts::PI,
                    provenance: Provenance::TsProbe,
                    gain: g,
                    fed_back: u % 2 == 0,
                })
                .collect(),
            intervals: Vec::new(),
            track_loss: None,
            clamp_events: 0,
        }
    }

    #[test]
    fn mean_gain_examples() {
        assert_eq!(summarize(&trace(&[1.0; 5])).unwrap().mean_gain, 1.0);
        assert_eq!(summarize(&trace(&[1.0, 0.0])).unwrap().mean_gain, 0.5);
        let g: Vec<f64> = (0..97).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let brute = g.iter().sum::<f64>() / g.len() as f64;
        assert!((summarize(&trace(&g)).unwrap().mean_gain - brute).abs() < 1e-15);
        assert!(summarize(&trace(&[])).is_err());
    }

    #[test]
    fn symbol_csv_round_trip() {
        let t = trace(&[0.123_456_789_012_345_68, 1.0 / 3.0, 0.0]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("u,t,theta_true,r_true,theta_hat,r_hat,provenance,gain,fed_back\n"));
        assert!(text.contains("ts-probe"));
        assert_eq!(read_symbols(buf.as_slice()).unwrap(), t.symbols);
    }

    #[test]
    fn summary_csv_round_trip() {
        let mut s = summarize(&trace(&[0.3, 0.9])).unwrap();
        let mut buf = Vec::new();
        write_summaries(std::slice::from_ref(&s), &mut buf).unwrap();
        assert_eq!(read_summaries(buf.as_slice()).unwrap(), vec![s.clone()]);
        s.track_loss_time = Some(1.25);
        buf.clear();
        write_summaries(std::slice::from_ref(&s), &mut buf).unwrap();
        assert_eq!(read_summaries(buf.as_slice()).unwrap(), vec![s]);
    }
}
