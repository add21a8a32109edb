//! Command-line front end: `run`, `validate`, `experiments` and `template`.
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2
//! when runs fail.

mod experiments;
mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use crate::error::{Error, Result};
use crate::harness::{run_sweep, summarize, write_summaries, RunSpec, RunSummary, RunTrace};
use crate::plot::{binned, LineChart, Series};

pub use experiments::{fig3_matrix, fig4_matrix, fig5_matrix, run_experiment, Figure};
pub use scenario::{
    feedback_count, ArraySection, ChannelSection, CodebookSection, MotionSection, ProtocolSection, RegionSection, ScenarioFile,
    SweepSection, DESK_SEEDS,
};

#[derive(Debug, Parser)]
#[command(name = "nftrack", version, about = "Near-field beam tracking simulator")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file; built-in defaults when absent.
    #[arg(long, short)]
    pub scenario: Option<PathBuf>,
    /// Override a key, e.g. `--set protocol.duration_s=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// N = 64, T = 1 s, five seeds.
    #[arg(long)]
    pub desk_scale: bool,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Output directory.
    #[arg(long, short, env = "NFTRACK_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, short)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureArg {
    Fig3,
    Fig4,
    Fig5,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenario's sweep matrix and write traces, a summary and plots.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        exec: ExecArgs,
        /// Replace the sweep seeds by this one.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario without running it.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Reproduce one of the figure experiments.
    Experiments {
        #[arg(value_enum)]
        figure: FigureArg,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        exec: ExecArgs,
        /// Replace the seeds by 1..=N.
        #[arg(long)]
        seeds: Option<u64>,
        /// Also write one trace CSV per run.
        #[arg(long)]
        traces: bool,
    },
    /// Print the default scenario document.
    Template {
        #[arg(long)]
        desk_scale: bool,
    },
}

/// Exit status for configuration and usage errors.
pub const EXIT_CONFIG: u8 = 1;
/// Exit status when at least one run failed.
pub const EXIT_RUN: u8 = 2;

const DEFAULT_OUT: &str = "nftrack-out";

impl ScenarioArgs {
    pub fn load(&self) -> Result<ScenarioFile> {
        let text = match &self.scenario {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut file = ScenarioFile::from_toml_with_overrides(&text, &self.overrides).map_err(|e| match &self.scenario {
            Some(p) => Error::Config(format!("{}: {e}", p.display())),
            None => e,
        })?;
        if self.desk_scale {
            file.desk_scale();
        }
        Ok(file)
    }
}

fn out_dir(exec: &ExecArgs, file: &ScenarioFile) -> PathBuf {
    exec.out.clone().or_else(|| file.out_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Runtime(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `specs`, keeping successful traces in spec order and logging failures.
pub(crate) fn execute(specs: &[RunSpec], jobs: Option<usize>) -> Result<(Vec<RunTrace>, usize)> {
    let results = with_pool(jobs, || run_sweep(specs))?;
    let mut traces = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r.trace {
            Ok(t) => traces.push(t),
            Err(e) => {
                error!("{}: {e}", r.id);
                failed += 1;
            }
        }
    }
    Ok((traces, failed))
}

pub(crate) fn save_summaries(rows: &[RunSummary], path: &Path) -> Result<()> {
    write_summaries(rows, fs::File::create(path)?)
}

/// Gain against time, averaged over 1 ms bins.
pub(crate) fn gain_series(trace: &RunTrace, name: String) -> Series {
    let times: Vec<f64> = trace.symbols.iter().map(|s| s.t).collect();
    let bin = ((1e-3 / trace.symbols.get(1).map_or(1.0, |s| s.t)).round() as usize).max(1);
    Series { name, points: binned(&times, &trace.gains(), bin), markers: false }
}

pub(crate) fn gain_chart(title: String, series: Vec<Series>) -> LineChart {
    LineChart { title, x_label: "time (s)".into(), y_label: "normalized gain".into(), series, y_range: Some((0.0, 1.0)) }
}

fn cmd_run(file: &ScenarioFile, exec: &ExecArgs) -> Result<usize> {
    file.validate()?;
    let out = out_dir(exec, file);
    let traces_dir = out.join("traces");
    let plots_dir = out.join("plots");
    fs::create_dir_all(&traces_dir)?;
    fs::create_dir_all(&plots_dir)?;
    let specs = file.run_specs()?;
    info!("running {} runs into {}", specs.len(), out.display());
    let (traces, failed) = execute(&specs, exec.jobs)?;
    let mut rows = Vec::with_capacity(traces.len());
    for t in &traces {
        t.save(&traces_dir)?;
        let stem = t.file_name().trim_end_matches(".csv").to_string();
        gain_chart(stem.clone(), vec![gain_series(t, t.policy.as_str().to_string())]).save(&plots_dir.join(format!("{stem}.svg")))?;
        rows.push(summarize(t)?);
    }
    save_summaries(&rows, &out.join("summary.csv"))?;
    let s = &file.sweep;
    if s.intervals_ms.len() > 1 {
        experiments::mean_chart(&rows, &s.policies, |r| r.interval_ms, "MLE interval (ms)", "mean gain versus interval")
            .save(&plots_dir.join("gain_vs_interval.svg"))?;
    }
    if s.feedback_ratios.len() > 1 {
        experiments::mean_chart(&rows, &s.policies, experiments::ratio_of, "feedback ratio", "mean gain versus feedback ratio")
            .save(&plots_dir.join("gain_vs_feedback.svg"))?;
    }
    for r in &rows {
        println!("{} {} seed {}: mean gain {:.4}", r.scenario, r.policy.as_str(), r.seed, r.mean_gain);
    }
    Ok(failed)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn report(result: Result<usize>) -> ExitCode {
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} run(s) failed");
            ExitCode::from(EXIT_RUN)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_RUN)
        }
    }
}

/// Entry point of the binary.
pub fn main_with(cli: Cli) -> ExitCode {
    init_logging(cli.verbose);
    match cli.command {
        Command::Run { scenario, exec, seed } => report(scenario.load().and_then(|mut file| {
            if let Some(s) = seed {
                file.sweep.seeds = vec![s];
            }
            cmd_run(&file, &exec)
        })),
        Command::Validate { scenario } => match scenario.load() {
            Ok(file) => {
                let v = file.violations();
                if v.is_empty() {
                    println!("ok: {} runs", file.run_specs().map(|s| s.len()).unwrap_or(0));
                    ExitCode::SUCCESS
                } else {
                    for line in &v {
                        eprintln!("{line}");
                    }
                    ExitCode::from(EXIT_CONFIG)
                }
            }
            Err(e) => report(Err(e)),
        },
        Command::Experiments { figure, scenario, exec, seeds, traces } => report(scenario.load().and_then(|mut file| {
            if let Some(n) = seeds {
                file.sweep.seeds = (1..=n).collect();
            }
            let figure = match figure {
                FigureArg::Fig3 => Figure::Fig3,
                FigureArg::Fig4 => Figure::Fig4,
                FigureArg::Fig5 => Figure::Fig5,
            };
            let out = out_dir(&exec, &file).join(figure.as_str());
            run_experiment(figure, &file, &out, exec.jobs, traces).map(|r| r.failed)
        })),
        Command::Template { desk_scale } => {
            let mut file = ScenarioFile::default();
            if desk_scale {
                file.desk_scale();
            }
            print!("{}", file.to_toml());
            ExitCode::SUCCESS
        }
    }
}
