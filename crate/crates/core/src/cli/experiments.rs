//! The three figure experiments: gain against update interval, against
//! feedback ratio, and against time for the baselines.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{summarize, PolicyKind, RunSummary, RunTrace};
use crate::plot::{LineChart, Series};

use super::scenario::fmt_num;
use super::{execute, gain_chart, gain_series, save_summaries, ScenarioFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Mean gain against `ΔT` for TS and exploitation.
    Fig3,
    /// TS gain at several feedback ratios.
    Fig4,
    /// TS against the pilot-sweep baselines and the genie.
    Fig5,
}

impl Figure {
    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
        }
    }
}

pub fn fig3_matrix(base: &ScenarioFile) -> ScenarioFile {
    let mut f = base.clone();
    f.sweep.intervals_ms = vec![5.0, 10.0, 20.0, 40.0];
    f.sweep.feedback_ratios = vec![0.75];
    f.sweep.policies = vec![PolicyKind::Ts, PolicyKind::Exploit];
    f
}

pub fn fig4_matrix(base: &ScenarioFile) -> ScenarioFile {
    let mut f = base.clone();
    f.sweep.intervals_ms = vec![10.0];
    f.sweep.feedback_ratios = vec![0.25, 0.5, 0.75, 1.0];
    f.sweep.policies = vec![PolicyKind::Ts];
    f
}

pub fn fig5_matrix(base: &ScenarioFile) -> ScenarioFile {
    let mut f = base.clone();
    f.sweep.intervals_ms = vec![10.0];
    f.sweep.feedback_ratios = vec![0.75];
    f.sweep.policies = vec![PolicyKind::Ts, PolicyKind::Ekf, PolicyKind::Coherence, PolicyKind::Genie];
    f
}

/// Seed statistics of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub interval_ms: f64,
    pub feedback_ratio: f64,
    pub policy: PolicyKind,
    pub seeds: usize,
    pub mean_gain: f64,
    /// Sample standard deviation across seeds; zero for one seed.
    pub std_gain: f64,
    pub mean_final_half_gain: f64,
    pub track_losses: usize,
}

/// Key of a sweep cell with exact float comparison, sorted by value.
fn cell_key(r: &RunSummary) -> (u64, u64, PolicyKind) {
    (r.interval_ms.to_bits(), r.feedback_ratio.to_bits(), r.policy)
}

pub fn seed_table(rows: &[RunSummary]) -> Vec<TableRow> {
    let mut cells: BTreeMap<(u64, u64, PolicyKind), Vec<&RunSummary>> = BTreeMap::new();
    for r in rows {
        cells.entry(cell_key(r)).or_default().push(r);
    }
    let mut table: Vec<TableRow> = cells
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            let mean = rs.iter().map(|r| r.mean_gain).sum::<f64>() / n;
            let var = if rs.len() > 1 { rs.iter().map(|r| (r.mean_gain - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            TableRow {
                interval_ms: rs[0].interval_ms,
                feedback_ratio: rs[0].feedback_ratio,
                policy: rs[0].policy,
                seeds: rs.len(),
                mean_gain: mean,
                std_gain: var.sqrt(),
                mean_final_half_gain: rs.iter().map(|r| r.final_half_gain).sum::<f64>() / n,
                track_losses: rs.iter().filter(|r| r.track_loss).count(),
            }
        })
        .collect();
    table.sort_by(|a, b| {
        a.interval_ms
            .total_cmp(&b.interval_ms)
            .then(a.feedback_ratio.total_cmp(&b.feedback_ratio))
            .then(a.policy.cmp(&b.policy))
    });
    table
}

pub(crate) fn ratio_of(r: &RunSummary) -> f64 {
    r.feedback_ratio
}

/// Seed-averaged mean gain against `x`, one curve per policy.
pub(crate) fn mean_chart(rows: &[RunSummary], policies: &[PolicyKind], x: impl Fn(&RunSummary) -> f64, x_label: &str, title: &str) -> LineChart {
    let series = policies
        .iter()
        .map(|&p| {
            let mut by_x: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.policy == p) {
                let xv = x(r);
                let e = by_x.entry(xv.to_bits()).or_insert((xv, 0.0, 0));
                e.1 += r.mean_gain;
                e.2 += 1;
            }
            let mut points: Vec<(f64, f64)> = by_x.into_values().map(|(xv, s, n)| (xv, s / n as f64)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name: p.as_str().to_string(), points, markers: true }
        })
        .collect();
    LineChart { title: title.to_string(), x_label: x_label.to_string(), y_label: "mean normalized gain".into(), series, y_range: None }
}

pub struct ExperimentReport {
    pub rows: Vec<RunSummary>,
    pub table: Vec<TableRow>,
    /// Traces of the first seed, for the time-domain charts.
    pub first_seed: Vec<RunTrace>,
    pub failed: usize,
}

/// Runs a figure matrix and writes `runs.csv`, `table.csv` and the charts
/// into `out`; with `save_traces` also every trace under `out/traces`.
pub fn run_experiment(figure: Figure, base: &ScenarioFile, out: &Path, jobs: Option<usize>, save_traces: bool) -> Result<ExperimentReport> {
    let file = match figure {
        Figure::Fig3 => fig3_matrix(base),
        Figure::Fig4 => fig4_matrix(base),
        Figure::Fig5 => fig5_matrix(base),
    };
    file.validate()?;
    fs::create_dir_all(out)?;
    let specs = file.run_specs()?;
    log::info!("{}: {} runs", figure.as_str(), specs.len());
    let (traces, failed) = execute(&specs, jobs)?;
    if save_traces {
        let dir = out.join("traces");
        fs::create_dir_all(&dir)?;
        for t in &traces {
            t.save(&dir)?;
        }
    }
    let rows = traces.iter().map(summarize).collect::<Result<Vec<_>>>()?;
    let table = seed_table(&rows);
    save_summaries(&rows, &out.join("runs.csv"))?;
    let mut w = csv::Writer::from_path(out.join("table.csv"))?;
    for r in &table {
        w.serialize(r)?;
    }
    w.flush()?;

    let first = file.sweep.seeds.first().copied();
    let first_seed: Vec<RunTrace> = traces.into_iter().filter(|t| Some(t.seed) == first).collect();
    let name = figure.as_str();
    match figure {
        Figure::Fig3 => {
            mean_chart(&rows, &file.sweep.policies, |r| r.interval_ms, "MLE interval (ms)", "mean gain versus MLE interval")
                .save(&out.join(format!("{name}.svg")))?;
        }
        Figure::Fig4 => {
            let series = first_seed.iter().map(|t| gain_series(t, format!("{}% feedback", fmt_num((100.0 * t.feedback_count as f64 / t.symbols_per_interval as f64).round())))).collect();
            gain_chart("gain versus time at several feedback ratios".into(), series).save(&out.join(format!("{name}.svg")))?;
            mean_chart(&rows, &file.sweep.policies, ratio_of, "feedback ratio", "mean gain versus feedback ratio")
                .save(&out.join(format!("{name}_mean.svg")))?;
        }
        Figure::Fig5 => {
            let mut series: Vec<Series> = first_seed.iter().map(|t| gain_series(t, t.policy.as_str().to_string())).collect();
            if let Some(t) = first_seed.first() {
                let (t0, t1) = (t.symbols[0].t, t.symbols[t.symbols.len() - 1].t);
                series.push(Series { name: "full CSI".into(), points: vec![(t0, 1.0), (t1, 1.0)], markers: false });
            }
            gain_chart("gain versus time against the baselines".into(), series).save(&out.join(format!("{name}.svg")))?;
        }
    }
    for r in &table {
        println!(
            "{name} interval {} ms ratio {} {}: mean gain {:.4} ± {:.4} over {} seeds, {} track losses",
            fmt_num(r.interval_ms),
            fmt_num(r.feedback_ratio),
            r.policy.as_str(),
            r.mean_gain,
            r.std_gain,
            r.seeds,
            r.track_losses
        );
    }
    Ok(ExperimentReport { rows, table, first_seed, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dt: f64, p: PolicyKind, seed: u64, g: f64) -> RunSummary {
        RunSummary {
            scenario: "s".into(),
            policy: p,
            seed,
            interval_ms: dt,
            feedback_count: 3,
            feedback_ratio: 0.75,
            symbols: 10,
            mean_gain: g,
            min_gain: g,
            final_half_gain: g,
            track_loss: g < 0.5,
            track_loss_time: None,
            clamp_events: 0,
            mle_intervals: 1,
            mean_cost: 0.0,
            mean_iterations: 0.0,
        }
    }

    #[test]
    fn table_groups_by_cell() {
        let rows = vec![
            row(10.0, PolicyKind::Ts, 1, 0.9),
            row(5.0, PolicyKind::Ts, 1, 1.0),
            row(10.0, PolicyKind::Ts, 2, 0.7),
            row(10.0, PolicyKind::Exploit, 1, 0.4),
        ];
        let t = seed_table(&rows);
        assert_eq!(t.len(), 3);
        assert_eq!((t[0].interval_ms, t[0].policy), (5.0, PolicyKind::Ts));
        assert_eq!(t[1].seeds, 2);
        assert!((t[1].mean_gain - 0.8).abs() < 1e-12);
        assert!((t[1].std_gain - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(t[2].track_losses, 1);
    }

    #[test]
    fn matrices_match_the_figures() {
        let base = ScenarioFile::default();
        assert_eq!(fig3_matrix(&base).run_specs().unwrap().len(), 8);
        assert_eq!(fig4_matrix(&base).run_specs().unwrap().len(), 4);
        let f5 = fig5_matrix(&base);
        assert_eq!(f5.sweep.policies.len(), 4);
        assert_eq!(f5.sweep.intervals_ms, vec![10.0]);
    }

    #[test]
    fn mean_chart_averages_seeds() {
        let rows = vec![row(10.0, PolicyKind::Ts, 1, 0.9), row(10.0, PolicyKind::Ts, 2, 0.7), row(20.0, PolicyKind::Ts, 1, 0.5)];
        let c = mean_chart(&rows, &[PolicyKind::Ts], |r| r.interval_ms, "x", "t");
        assert_eq!(c.series[0].points.len(), 2);
        assert!((c.series[0].points[0].1 - 0.8).abs() < 1e-12);
    }
}
