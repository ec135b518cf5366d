use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::pipeline::{Mode, Stage};

#[derive(Debug, Parser)]
#[command(name = "oocstore", version, about = "Plan, pack and serve out-of-core GNN feature layouts")]
pub struct Cli {
    /// Directory holding workload, plan and layout files.
    #[arg(long, global = true, env = "OOC_WORKDIR", default_value = ".")]
    pub workdir: PathBuf,

    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic graph, feature file and sample set.
    Gen(GenArgs),
    /// Choose tiers, segment size and threshold for a disk budget.
    Plan(PlanArgs),
    /// Materialize the plan as chunk, cache and tier files.
    Pack(PackArgs),
    /// Run training epochs over the layout (or the fine-grained baseline).
    Train(TrainArgs),
    /// Predicted page totals of the reference layouts side by side.
    Compare(CompareArgs),
    /// Summarize I/O statistics of saved train reports.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub num_nodes: u64,
    #[arg(long, default_value_t = 10)]
    pub avg_degree: usize,
    /// Zipf exponent of destination popularity.
    #[arg(long, default_value_t = 1.0)]
    pub skew: f64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub dim: u32,
    #[arg(long, default_value_t = crate::DEFAULT_PAGE_SIZE, value_parser = clap::value_parser!(u32).range(1..))]
    pub page_size: u32,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: u64,
    /// Per-hop neighbor counts, comma separated.
    #[arg(long, default_value = "5,5", value_parser = parse_fanout)]
    pub fanout: Fanout,
    /// Number of batches; defaults to every node seeding exactly once.
    #[arg(long)]
    pub num_batches: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Fast-tier capacity: a node count or a percentage of nodes.
    #[arg(long, default_value = "5%")]
    pub fast: CountSpec,
    /// Host-tier capacity: a node count or a percentage of nodes.
    #[arg(long, default_value = "10%")]
    pub host: CountSpec,
    /// Disk budget C: bytes (K/M/G suffixes), `Nx` or `P%` of the feature bytes.
    #[arg(long, default_value = "3x")]
    pub disk_budget: ByteSpec,
    /// MinHash functions per segment.
    #[arg(long, default_value_t = crate::reorder::DEFAULT_NUM_HASHES, value_parser = clap::value_parser!(u32).range(1..))]
    pub num_hashes: u32,
    #[arg(long, default_value_t = 0)]
    pub reorder_seed: u64,
    /// Keep cache files in node-id order.
    #[arg(long)]
    pub no_reorder: bool,
    /// Also search the full (s, m) grid and report both results.
    #[arg(long)]
    pub brute_force: bool,
    /// Segment sizes for the grid search; defaults to 1..=n.
    #[arg(long, value_delimiter = ',')]
    pub s_grid: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub m_grid: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    /// Packing memory budget (K/M/G suffixes).
    #[arg(long, default_value = "64M", value_parser = parse_size)]
    pub mem_budget: u64,
    /// Use per-feature reads instead of batched partition reads.
    #[arg(long)]
    pub individual: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sequential,
    Pipelined,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sequential => Mode::Sequential,
            ModeArg::Pipelined => Mode::Pipelined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    FineGrained,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Pipelined)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_QUEUE_CAPACITY, value_parser = parse_positive)]
    pub queue_capacity: usize,
    /// Extra per-batch delay, e.g. `load=10` (milliseconds). Repeatable.
    #[arg(long = "inject-delay", value_parser = parse_delay)]
    pub inject_delay: Vec<(Stage, u64)>,
    #[arg(long, default_value_t = 1)]
    pub epochs: u32,
    /// Serve batches with one random page read per feature instead.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Threads issuing a batch's random page reads.
    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    pub io_threads: usize,
    /// Open data files with O_DIRECT where supported.
    #[arg(long)]
    pub direct_io: bool,
    /// Check every batch against rows read straight from the feature file.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Train reports written by `train --out`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fanout(pub Vec<u32>);

fn parse_fanout(s: &str) -> Result<Fanout, String> {
    let hops = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| format!("bad hop count {p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if hops.is_empty() {
        return Err("fanout needs at least one hop".into());
    }
    Ok(Fanout(hops))
}

/// Byte count with optional binary K/M/G suffix.
pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, mult) = match s.as_bytes().last().map(u8::to_ascii_uppercase) {
        Some(b'K') => (&s[..s.len() - 1], 1u64 << 10),
        Some(b'M') => (&s[..s.len() - 1], 1 << 20),
        Some(b'G') => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    digits
        .parse::<u64>()
        .ok()
        .and_then(|v| v.checked_mul(mult))
        .ok_or_else(|| format!("invalid size {s:?}"))
}

fn parse_delay(s: &str) -> Result<(Stage, u64), String> {
    let (stage, ms) = s
        .split_once('=')
        .ok_or_else(|| format!("expected STAGE=MS, got {s:?}"))?;
    let stage = Stage::from_str(stage.trim()).map_err(|e| e.to_string())?;
    let ms = ms.trim().parse().map_err(|e| format!("bad delay {ms:?}: {e}"))?;
    Ok((stage, ms))
}

fn parse_percent(s: &str) -> Option<Result<f64, String>> {
    let p = s.strip_suffix('%')?;
    Some(
        p.trim()
            .parse::<f64>()
            .ok()
            .filter(|p| p.is_finite() && *p >= 0.0)
            .ok_or_else(|| format!("invalid percentage {s:?}")),
    )
}

/// A node count, absolute or relative to the number of nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountSpec {
    Nodes(u64),
    Percent(f64),
}

impl CountSpec {
    pub fn resolve(self, num_nodes: u64) -> u64 {
        match self {
            CountSpec::Nodes(n) => n,
            CountSpec::Percent(p) => (num_nodes as f64 * p / 100.0).floor() as u64,
        }
    }
}

impl FromStr for CountSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(p) = parse_percent(s) {
            return p.map(CountSpec::Percent);
        }
        s.trim()
            .parse()
            .map(CountSpec::Nodes)
            .map_err(|_| format!("expected a node count or percentage, got {s:?}"))
    }
}

/// A byte budget, absolute or relative to the total feature bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ByteSpec {
    Bytes(u64),
    Times(f64),
    Percent(f64),
}

impl ByteSpec {
    pub fn resolve(self, feature_bytes: u64) -> u64 {
        match self {
            ByteSpec::Bytes(b) => b,
            ByteSpec::Times(x) => (feature_bytes as f64 * x).floor() as u64,
            ByteSpec::Percent(p) => (feature_bytes as f64 * p / 100.0).floor() as u64,
        }
    }
}

impl FromStr for ByteSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(p) = parse_percent(s) {
            return p.map(ByteSpec::Percent);
        }
        if let Some(x) = s.trim().strip_suffix(['x', 'X']) {
            return x
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x >= 0.0)
                .map(ByteSpec::Times)
                .ok_or_else(|| format!("invalid multiple {s:?}"));
        }
        parse_size(s).map(ByteSpec::Bytes)
    }
}

pub(crate) fn check_grid(name: &str, grid: &[u32]) -> Result<()> {
    if grid.contains(&0) {
        return Err(Error::invalid(format!("--{name} values must be at least 1")));
    }
    Ok(())
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}
