//! Command-line front end: solve for schedules, collect samples, simulate
//! probing, compare against degree baselines and run the adaptive loop.
//!
//! Every command that produces files also writes a flat `key=value`
//! manifest recording the resolved parameters, the seed, SHA-256 digests of
//! the inputs and the argument vector, so `wiggins replay --manifest F`
//! can reproduce the run.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 solver did not
//! converge, 4 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod manifest;

use manifest::RunManifest;
use wiggins::simulate::BiasBand;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "wiggins",
    version,
    about = "Optimal probing schedules for catching new items in a network"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the optimal schedule from a process or from a sample.
    Solve(SolveArgs),
    /// Observe a source for a number of steps and write the sample.
    Sample(SampleArgs),
    /// Probe a source with a fixed schedule and record the load.
    Simulate(SimulateArgs),
    /// Rank the sample-optimal schedule against degree baselines.
    Compare(CompareArgs),
    /// Run the perturb / observe / re-solve loop.
    Dynamic(DynamicArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    /// Novelty decay per step.
    #[arg(long, default_value_t = 0.75)]
    pub theta: f64,
    /// Probes per step.
    #[arg(long, default_value_t = 1)]
    pub c: u32,
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Edge ids start at 1 instead of 0.
    #[arg(long)]
    pub one_based: bool,
    /// Add the reverse of every edge.
    #[arg(long)]
    pub undirected: bool,
    /// Head probability band `min:max:prob` over out-degrees in
    /// `[min, max)`; leave max empty for no upper bound. Repeatable.
    #[arg(long = "bias", value_name = "MIN:MAX:PROB", value_parser = parse_band)]
    pub bias: Vec<BiasBand>,
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Explicit generating process file.
    #[arg(long, conflicts_with = "graph", required_unless_present = "graph")]
    pub process: Option<PathBuf>,
    /// Edge list driving an independent-cascade source.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Node count for a process file (default: one past the largest id).
    #[arg(long, requires = "process")]
    pub nodes: Option<usize>,
    #[command(flatten)]
    pub graph_opts: GraphArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Manifest path (default: `<out>.manifest`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["process", "sample"])))]
pub struct SolveArgs {
    #[arg(long)]
    pub process: Option<PathBuf>,
    #[arg(long, requires = "nodes")]
    pub sample: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long, default_value_t = wiggins::solver::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = wiggins::solver::DEFAULT_CONV_TOL)]
    pub tol: f64,
    /// Run each iteration through the map/reduce engine with this many workers.
    #[arg(long, requires = "sample")]
    pub workers: Option<usize>,
    /// Cost trace CSV (default: `<out>.trace.csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(
        long,
        required_unless_present = "auto_steps",
        conflicts_with = "auto_steps"
    )]
    pub steps: Option<u64>,
    /// Take the length from the sample-size bound for `--epsilon/--theta/--r`.
    #[arg(long)]
    pub auto_steps: bool,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.75)]
    pub theta: f64,
    #[arg(long, default_value_t = 1)]
    pub r: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub schedule: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw the c probes without replacement.
    #[arg(long)]
    pub without_replacement: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[command(flatten)]
    pub graph_opts: GraphArgs,
    /// Number of evaluation samples.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Steps per evaluation sample.
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    /// Steps in the training sample (default: `--steps`).
    #[arg(long)]
    pub train_steps: Option<u64>,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long, default_value_t = wiggins::solver::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the trained schedule here.
    #[arg(long)]
    pub schedule_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DynamicArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// One letter per phase: N probes, P relabels the nodes at the phase
    /// start, S starts observing at the phase start and re-solves.
    #[arg(long, default_value = "SNPSN")]
    pub phases: String,
    /// Steps per phase (default: sample-size bound at `--epsilon`).
    #[arg(long)]
    pub phase_length: Option<u64>,
    /// Steps observed per re-sample (default: sample-size bound at `--epsilon`).
    #[arg(long)]
    pub resample_length: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub r: u32,
    #[arg(long, default_value_t = wiggins::adapt::DEFAULT_STALENESS_K)]
    pub staleness_k: f64,
    /// Also re-sample whenever a tracked set goes stale.
    #[arg(long)]
    pub detect_drift: bool,
    #[arg(long, default_value_t = wiggins::solver::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Event log (default: `<out>.events`).
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Re-run even if an input digest no longer matches.
    #[arg(long)]
    pub force: bool,
}

/// Parses `min:max:prob`; an empty or `inf` max means unbounded.
pub fn parse_band(s: &str) -> Result<BiasBand, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, prob] = parts[..] else {
        return Err(format!("expected MIN:MAX:PROB, got {s:?}"));
    };
    let min_outdeg = min.trim().parse().map_err(|_| format!("bad min {min:?}"))?;
    let max_outdeg = match max.trim() {
        "" | "inf" => None,
        m => Some(m.parse().map_err(|_| format!("bad max {m:?}"))?),
    };
    let head_prob: f64 = prob
        .trim()
        .parse()
        .map_err(|_| format!("bad probability {prob:?}"))?;
    if !(0.0..=1.0).contains(&head_prob) {
        return Err(format!("probability {head_prob} outside [0,1]"));
    }
    if max_outdeg.is_some_and(|m| m <= min_outdeg) {
        return Err(format!("empty band {s:?}"));
    }
    Ok(BiasBand {
        min_outdeg,
        max_outdeg,
        head_prob,
    })
}

/// Error raised for inconsistent arguments detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<wiggins::Error>() {
        Some(wiggins::Error::Numerical { .. } | wiggins::Error::DegenerateProcess) => {
            EXIT_NUMERICAL
        }
        _ => EXIT_USAGE,
    }
}

fn manifest_path(out: &OutputArgs) -> PathBuf {
    out.manifest
        .clone()
        .unwrap_or_else(|| with_suffix(&out.out, "manifest"))
}

/// `path` with `.suffix` appended to the full file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Parses and runs one command line; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();

    let (name, output) = match &cli.command {
        Command::Solve(a) => ("solve", &a.output),
        Command::Sample(a) => ("sample", &a.output),
        Command::Simulate(a) => ("simulate", &a.output),
        Command::Compare(a) => ("compare", &a.output),
        Command::Dynamic(a) => ("dynamic", &a.output),
        Command::Replay(a) => {
            return match commands::replay(a) {
                Ok(code) => code,
                Err(e) => report(&e),
            }
        }
    };

    let mut m = RunManifest::new(name, &argv);
    let result = match &cli.command {
        Command::Solve(a) => commands::solve(a, &mut m),
        Command::Sample(a) => commands::sample(a, &mut m),
        Command::Simulate(a) => commands::simulate(a, &mut m),
        Command::Compare(a) => commands::compare(a, &mut m),
        Command::Dynamic(a) => commands::dynamic(a, &mut m),
        Command::Replay(_) => unreachable!("handled above"),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            m.set("error", format!("{e:#}"));
            report(&e)
        }
    };
    m.set("finished_unix_ms", manifest::unix_millis());
    m.set("exit_code", code);
    if let Err(e) = m.write(&manifest_path(output)) {
        eprintln!("error: {e:#}");
    }
    code
}

fn report(e: &anyhow::Error) -> i32 {
    eprintln!("error: {e:#}");
    exit_code_for(e)
}
