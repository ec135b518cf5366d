//! Command-line front end. Every command reads and writes files under the
//! work directory and prints a TOML report.
//!
//! Exit codes: 0 success, 1 usage or invalid input, 2 infeasible plan,
//! 3 I/O, format or consistency failure.

mod args;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use serde::{Deserialize, Serialize};

pub use args::{
    parse_size, Baseline, ByteSpec, Cli, Command, CompareArgs, CountSpec, GenArgs, ModeArg,
    PackArgs, PlanArgs, StatsArgs, TrainArgs,
};

use crate::error::{Error, Result};
use crate::iostore::{FeatureSource, FineGrainedStore, IoStats, LayoutStore, StoreOptions};
use crate::packer::{batched_pack, individual_pack, DiskLayout, PackInput, PackReport};
use crate::pipeline::{run_training, StageConfig, StageDelays, TrainReport};
use crate::planner::{
    assign_memory_tiers, brute_force_search, build_disk_plan, count_frequencies, heuristic_search,
    io_cost, space_usage, DiskPlan, MemoryTierPlan, PlanManifest, PLAN_MANIFEST_VERSION,
};
use crate::reorder::{CacheOrder, Reorderer};
use crate::workload::{
    direct_gather, generate_workload, FeatureFile, PageGeometry, SampleSet, WorkloadParams,
    FEATURE_FILE, SAMPLE_FILE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const GEN_ECHO: &str = "gen.toml";
pub const PLAN_FILE: &str = "plan.toml";
pub const LAYOUT_DIR: &str = "layout";

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::PackingBudget { .. } => EXIT_USAGE,
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::Io(_)
        | Error::IoAt { .. }
        | Error::Format(_)
        | Error::Inconsistent(_)
        | Error::Pipeline(_) => EXIT_IO,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let wd = &cli.workdir;
    let report = match &cli.command {
        Command::Gen(a) => to_toml(&cmd_gen(wd, a)?)?,
        Command::Plan(a) => to_toml(&cmd_plan(wd, a)?)?,
        Command::Pack(a) => to_toml(&cmd_pack(wd, a)?)?,
        Command::Train(a) => to_toml(&cmd_train(wd, a)?)?,
        Command::Compare(a) => to_toml(&cmd_compare(wd, a)?)?,
        Command::Stats(a) => to_toml(&cmd_stats(a)?)?,
    };
    emit(cli.out.as_deref(), &report)
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::format(format!("report: {e}")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::at(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(Error::Io),
    }
}

fn read_features(wd: &Path) -> Result<FeatureFile> {
    FeatureFile::open(&wd.join(FEATURE_FILE))
}

fn read_samples(wd: &Path, features: &FeatureFile) -> Result<SampleSet> {
    let s = SampleSet::read(&wd.join(SAMPLE_FILE))?;
    s.validate(features.header.num_nodes)?;
    Ok(s)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenReport {
    pub params: WorkloadParams,
    pub num_edges: u64,
    pub num_batches: u64,
    pub feature_bytes: u64,
    pub files: Vec<String>,
}

pub fn cmd_gen(wd: &Path, a: &GenArgs) -> Result<GenReport> {
    let params = WorkloadParams {
        num_nodes: a.num_nodes as usize,
        avg_degree: a.avg_degree,
        skew: a.skew,
        dim: a.dim,
        page_size: a.page_size,
        batch_size: a.batch_size as usize,
        fanout: a.fanout.0.clone(),
        num_batches: a.num_batches,
        seed: a.seed,
    };
    // reject bad shapes before touching the disk
    crate::workload::FeatureHeader::new(a.num_nodes, a.dim, a.page_size)?;
    let w = generate_workload(wd, &params)?;
    let echo = wd.join(GEN_ECHO);
    std::fs::write(&echo, to_toml(&params)?).map_err(|e| Error::at(&echo, e))?;
    Ok(GenReport {
        num_edges: w.graph.num_edges() as u64,
        num_batches: w.samples.len() as u64,
        feature_bytes: w.features.header.feature_bytes(),
        files: crate::workload::workload_paths(wd)
            .iter()
            .chain([&echo])
            .map(|p| p.display().to_string())
            .collect(),
        params,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanSummary {
    pub segment_size: u32,
    pub threshold: u32,
    pub space: u64,
    pub predicted_pages: u64,
    pub search_secs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanReport {
    pub plan_file: String,
    pub fast_nodes: u64,
    pub host_nodes: u64,
    pub disk_budget: u64,
    pub feature_bytes: u64,
    pub heuristic: PlanSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brute_force: Option<PlanSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<u64>,
}

fn reorderer_of(m: &PlanManifest) -> Reorderer {
    if m.reorder {
        Reorderer::MinHash {
            k: m.num_hashes,
            rng_seed: m.reorder_seed,
        }
    } else {
        Reorderer::Identity
    }
}

pub fn cmd_plan(wd: &Path, a: &PlanArgs) -> Result<PlanReport> {
    args::check_grid("s-grid", &a.s_grid)?;
    args::check_grid("m-grid", &a.m_grid)?;
    let features = read_features(wd)?;
    let samples = read_samples(wd, &features)?;
    let h = features.header;
    let geom = h.geometry();
    let fast = a.fast.resolve(h.num_nodes);
    let host = a.host.resolve(h.num_nodes);
    let budget = a.disk_budget.resolve(h.feature_bytes());

    let freq = count_frequencies(&samples, h.num_nodes as usize)?;
    let tiers = assign_memory_tiers(&freq, fast, host);
    let reorderer = if a.no_reorder {
        Reorderer::Identity
    } else {
        Reorderer::MinHash {
            k: a.num_hashes,
            rng_seed: a.reorder_seed,
        }
    };

    let t = Instant::now();
    let found = heuristic_search(&samples, &tiers, budget, geom)?;
    let orders = reorderer.apply(&found.plan, &samples)?;
    let cost = io_cost(&found.plan, &orders, geom)?;
    let heuristic = PlanSummary {
        segment_size: found.plan.segment_size,
        threshold: found.plan.threshold,
        space: found.space,
        predicted_pages: cost.total_pages,
        search_secs: t.elapsed().as_secs_f64(),
    };

    let (brute_force, grid_points) = if a.brute_force {
        let s_grid: Vec<u32> = if a.s_grid.is_empty() {
            (1..=samples.len().max(1) as u32).collect()
        } else {
            a.s_grid.clone()
        };
        let t = Instant::now();
        let b = brute_force_search(&samples, &tiers, budget, geom, &s_grid, &a.m_grid, reorderer)?;
        (
            Some(PlanSummary {
                segment_size: b.plan.segment_size,
                threshold: b.plan.threshold,
                space: b.space,
                predicted_pages: b.cost.total_pages,
                search_secs: t.elapsed().as_secs_f64(),
            }),
            Some(b.evaluated.len() as u64),
        )
    } else {
        (None, None)
    };

    let manifest = PlanManifest {
        version: PLAN_MANIFEST_VERSION,
        num_nodes: h.num_nodes,
        dim: h.dim,
        page_size: h.page_size,
        row_bytes: h.row_bytes(),
        fpp: geom.fpp(),
        num_batches: samples.len() as u64,
        num_hashes: a.num_hashes,
        reorder_seed: a.reorder_seed,
        reorder: !a.no_reorder,
        tiers,
        disk: found.plan,
    };
    let path = wd.join(PLAN_FILE);
    manifest.write(&path)?;
    Ok(PlanReport {
        plan_file: path.display().to_string(),
        fast_nodes: manifest.tiers.fast_nodes.len() as u64,
        host_nodes: manifest.tiers.host_nodes.len() as u64,
        disk_budget: budget,
        feature_bytes: h.feature_bytes(),
        heuristic,
        brute_force,
        grid_points,
    })
}

/// Plan manifest checked against the workload it claims to describe.
fn read_plan(wd: &Path, features: &FeatureFile, samples: &SampleSet) -> Result<PlanManifest> {
    let m = PlanManifest::read(&wd.join(PLAN_FILE))?;
    let h = features.header;
    if m.num_nodes != h.num_nodes || m.dim != h.dim || m.page_size != h.page_size {
        return Err(Error::inconsistent(
            "plan was made for a different feature file; rerun plan",
        ));
    }
    if m.num_batches != samples.len() as u64 {
        return Err(Error::inconsistent(
            "plan was made for a different sample set; rerun plan",
        ));
    }
    Ok(m)
}

pub fn cmd_pack(wd: &Path, a: &PackArgs) -> Result<PackReport> {
    let features = read_features(wd)?;
    let samples = read_samples(wd, &features)?;
    let plan = read_plan(wd, &features, &samples)?;
    let orders = reorderer_of(&plan).apply(&plan.disk, &samples)?;
    let input = PackInput {
        features: &features,
        samples: &samples,
        tiers: &plan.tiers,
        plan: &plan.disk,
        orders: &orders,
    };
    let out = wd.join(LAYOUT_DIR);
    let (_, report) = if a.individual {
        individual_pack(input, &out)?
    } else {
        batched_pack(input, &out, a.mem_budget)?
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub source: String,
    /// Feature pages the planner predicts per epoch, for the layout source.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_feature_pages: Option<u64>,
    pub measured_feature_pages: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplification: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verified_batches: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDocument {
    pub summary: TrainSummary,
    pub epochs: Vec<TrainReport>,
}

/// Cache orders recorded in a layout manifest.
fn layout_orders(layout: &DiskLayout) -> Result<Vec<CacheOrder>> {
    layout
        .manifest
        .segments
        .iter()
        .map(|s| CacheOrder::new(s.segment_id, s.nodes.clone()))
        .collect()
}

pub fn cmd_train(wd: &Path, a: &TrainArgs) -> Result<TrainDocument> {
    let mut delays = StageDelays::default();
    for &(stage, ms) in &a.inject_delay {
        delays.set(stage, Duration::from_millis(ms));
    }
    let config = StageConfig {
        mode: a.mode.into(),
        queue_capacity: a.queue_capacity,
        delays,
    };
    let options = StoreOptions {
        direct_io: a.direct_io,
        io_threads: a.io_threads,
    };
    let features = read_features(wd)?;
    let (source, predicted, name): (Box<dyn FeatureSource>, Option<u64>, &str) = match a.baseline {
        Some(Baseline::FineGrained) => {
            let samples = read_samples(wd, &features)?;
            let plan = read_plan(wd, &features, &samples)?;
            let store = FineGrainedStore::open(&features, samples, plan.tiers, options)?;
            (Box::new(store), None, "fine-grained")
        }
        None => {
            let layout = DiskLayout::open(&wd.join(LAYOUT_DIR))?;
            let plan = disk_plan_of(&layout)?;
            let cost = io_cost(&plan, &layout_orders(&layout)?, layout.manifest.geometry())?;
            let store = LayoutStore::open(layout, options)?;
            (Box::new(store), Some(cost.total_pages), "layout")
        }
    };

    let mismatch = std::sync::atomic::AtomicU64::new(0);
    let checked = std::sync::atomic::AtomicU64::new(0);
    let verify = |b: &crate::iostore::AssembledBatch, _: &crate::pipeline::TrainOutput| {
        use std::sync::atomic::Ordering::Relaxed;
        let ok = direct_gather(&features, &b.sample.nodes)
            .map(|rows| {
                rows.iter().map(|x| x.to_bits()).eq(b.features.rows.iter().map(|x| x.to_bits()))
            })
            .unwrap_or(false);
        checked.fetch_add(1, Relaxed);
        if !ok {
            mismatch.fetch_add(1, Relaxed);
        }
    };
    let observer: Option<crate::pipeline::Observer<'_>> = a.verify.then_some(&verify);
    let epochs = run_training(source.as_ref(), &config, a.epochs, observer)?;
    let bad = mismatch.into_inner();
    if bad > 0 {
        return Err(Error::inconsistent(format!(
            "{bad} batches differ from the feature file"
        )));
    }
    let io = epochs.first().map(|r| r.io).unwrap_or_default();
    Ok(TrainDocument {
        summary: TrainSummary {
            source: name.to_string(),
            predicted_feature_pages: predicted,
            measured_feature_pages: io.feature_pages(),
            amplification: io.amplification(),
            verified_batches: a.verify.then(|| checked.into_inner()),
        },
        epochs,
    })
}

/// Rebuilds the plan's packed lists and cache membership from a layout, for
/// cost prediction.
fn disk_plan_of(layout: &DiskLayout) -> Result<DiskPlan> {
    let m = &layout.manifest;
    let mut segments = Vec::with_capacity(m.segments.len());
    for s in &m.segments {
        let mut cache_nodes = s.nodes.clone();
        cache_nodes.sort_unstable();
        segments.push(crate::planner::SegmentPlan {
            segment_id: s.segment_id,
            batch_ids: Vec::new(),
            cache_nodes,
            packed: Vec::new(),
            cached_required: Vec::new(),
        });
    }
    for (chunk, table) in m.batches.iter().zip(&layout.tables.batches) {
        let seg = segments
            .get_mut(chunk.segment_id as usize)
            .ok_or_else(|| Error::inconsistent(format!("missing segment {}", chunk.segment_id)))?;
        seg.batch_ids.push(chunk.batch_id);
        seg.packed.push(chunk.packed.clone());
        let mut cached: Vec<_> = table
            .entries
            .iter()
            .filter(|e| matches!(e.1, crate::packer::Location::Cache { .. }))
            .map(|e| e.0)
            .collect();
        cached.sort_unstable();
        seg.cached_required.push(cached);
    }
    Ok(DiskPlan {
        segment_size: m.segment_size,
        threshold: m.threshold,
        space_budget: m.space_budget,
        segments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub segment_size: u32,
    pub threshold: u32,
    pub feature_pages: u64,
    pub packed_pages: u64,
    pub cache_pages: u64,
    pub feature_bytes_read: u64,
    pub disk_space: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

/// Predicted per-epoch page totals of five layouts sharing the plan's tiers:
/// per-feature reads, one global cache in id order, the same cache
/// MinHash-ordered, the plan's segmented cache, and everything packed.
pub fn compare_layouts(
    samples: &SampleSet,
    tiers: &MemoryTierPlan,
    geom: PageGeometry,
    segmented: (u32, u32),
    minhash: Reorderer,
) -> Result<CompareReport> {
    if samples.is_empty() {
        return Ok(CompareReport { rows: Vec::new() });
    }
    let page = u64::from(geom.page_size);
    let disk_nodes: u64 = samples
        .batches
        .iter()
        .flat_map(|b| &b.nodes)
        .filter(|&&v| !tiers.is_cached(v))
        .count() as u64;
    let mut rows = vec![CompareRow {
        name: "fine-grained".into(),
        segment_size: 0,
        threshold: 0,
        feature_pages: disk_nodes,
        packed_pages: 0,
        cache_pages: disk_nodes,
        feature_bytes_read: disk_nodes * page,
        disk_space: 0,
    }];
    let n = samples.len() as u32;
    let variants = [
        ("no-reorder", (n, 1), Reorderer::Identity),
        ("global-reorder", (n, 1), minhash),
        ("segmented-reorder", segmented, minhash),
        ("full-packed", (1, 1), Reorderer::Identity),
    ];
    for (name, (s, m), reorderer) in variants {
        let plan = build_disk_plan(samples, tiers, s, m)?;
        let cost = io_cost(&plan, &reorderer.apply(&plan, samples)?, geom)?;
        rows.push(CompareRow {
            name: name.into(),
            segment_size: s,
            threshold: m,
            feature_pages: cost.total_pages,
            packed_pages: cost.packed_pages(),
            cache_pages: cost.cache_pages(),
            feature_bytes_read: cost.total_bytes,
            disk_space: space_usage(&plan, geom),
        });
    }
    Ok(CompareReport { rows })
}

pub fn cmd_compare(wd: &Path, _: &CompareArgs) -> Result<CompareReport> {
    let features = read_features(wd)?;
    let samples = read_samples(wd, &features)?;
    let plan = read_plan(wd, &features, &samples)?;
    let minhash = Reorderer::MinHash {
        k: plan.num_hashes,
        rng_seed: plan.reorder_seed,
    };
    compare_layouts(
        &samples,
        &plan.tiers,
        features.header.geometry(),
        (plan.disk.segment_size, plan.disk.threshold),
        minhash,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsEntry {
    pub report: String,
    pub source: String,
    pub epoch: u32,
    pub io: IoStats,
    pub feature_bytes_read: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplification: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub entries: Vec<StatsEntry>,
}

pub fn cmd_stats(a: &StatsArgs) -> Result<StatsReport> {
    let mut entries = Vec::new();
    for path in &a.reports {
        let doc = read_train_document(path)?;
        for e in &doc.epochs {
            entries.push(StatsEntry {
                report: path.display().to_string(),
                source: doc.summary.source.clone(),
                epoch: e.epoch,
                io: e.io,
                feature_bytes_read: e.io.feature_bytes_read(),
                amplification: e.io.amplification(),
            });
        }
    }
    Ok(StatsReport { entries })
}

pub fn read_train_document(path: &PathBuf) -> Result<TrainDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::at(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}
