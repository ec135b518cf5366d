use std::fs::{File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::layout::{embed_graph_sample, ADDRESS_TABLES, LAYOUT_MANIFEST, LAYOUT_VERSION};
use super::{
    build_address_tables, ChunkFile, DiskLayout, LayoutManifest, SegmentFile, TierFile,
};
use crate::error::{Error, Result};
use crate::iostore::{IoCounters, PageFile};
use crate::planner::{DiskPlan, MemoryTierPlan};
use crate::reorder::CacheOrder;
use crate::workload::{FeatureFile, FeatureHeader, SampleSet};
use crate::NodeId;

/// Everything a packing run consumes.
#[derive(Debug, Clone, Copy)]
pub struct PackInput<'a> {
    pub features: &'a FeatureFile,
    pub samples: &'a SampleSet,
    pub tiers: &'a MemoryTierPlan,
    pub plan: &'a DiskPlan,
    pub orders: &'a [CacheOrder],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PackMode {
    Batched,
    Individual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackReport {
    pub mode: PackMode,
    pub source_pages_read: u64,
    pub source_read_ops: u64,
    /// Pages of chunk (including sample sections), cache and tier files.
    pub pages_written: u64,
    /// Partitions that contained at least one needed feature.
    pub partitions: u64,
    /// Pages per partition; zero for individual packing.
    pub partition_pages: u64,
    pub wall_secs: f64,
}

/// Removes every file it tracks unless disarmed.
struct Cleanup {
    paths: Vec<PathBuf>,
    armed: bool,
}

impl Cleanup {
    fn new() -> Self {
        Self {
            paths: Vec::new(),
            armed: true,
        }
    }

    fn create(&mut self, path: PathBuf) -> Result<File> {
        let f = File::create(&path).map_err(|e| Error::at(&path, e))?;
        self.paths.push(path);
        Ok(f)
    }

    fn disarm(&mut self) {
        self.armed = false;
    }
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if self.armed {
            for p in &self.paths {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

fn chunk_path(batch_id: u64) -> String {
    format!("chunks/batch_{batch_id:06}.chunk")
}

fn cache_path(segment_id: u32) -> String {
    format!("cache/segment_{segment_id:05}.cache")
}

/// Checks the inputs against each other and derives the manifest both
/// packing strategies write.
pub fn layout_manifest(input: &PackInput<'_>) -> Result<LayoutManifest> {
    let header = input.features.header;
    let plan = input.plan;
    let geom = header.geometry();
    plan.check_coverage(input.samples, input.tiers)?;
    input.samples.validate(header.num_nodes).map_err(|e| Error::inconsistent(e.to_string()))?;
    if let Some(v) = input
        .tiers
        .fast_nodes
        .iter()
        .chain(&input.tiers.host_nodes)
        .find(|&&v| u64::from(v) >= header.num_nodes)
    {
        return Err(Error::inconsistent(format!("tier node {v} outside feature file")));
    }
    if input.orders.len() != plan.segments.len() {
        return Err(Error::inconsistent(format!(
            "{} cache orders for {} segments",
            input.orders.len(),
            plan.segments.len()
        )));
    }
    let mut segments = Vec::with_capacity(plan.segments.len());
    let mut batches = Vec::with_capacity(plan.num_batches());
    for (seg, order) in plan.segments.iter().zip(input.orders) {
        let mut sorted = order.nodes().to_vec();
        sorted.sort_unstable();
        if order.segment_id != seg.segment_id || sorted != seg.cache_nodes {
            return Err(Error::inconsistent(format!(
                "cache order {} is not a permutation of segment {}'s cache",
                order.segment_id, seg.segment_id
            )));
        }
        segments.push(SegmentFile {
            segment_id: seg.segment_id,
            path: cache_path(seg.segment_id),
            nodes: order.nodes().to_vec(),
        });
        for (local, &batch_id) in seg.batch_ids.iter().enumerate() {
            let packed = seg.packed[local].clone();
            let feature_len = geom.bytes_for(packed.len() as u64);
            let sample = &input.samples.batches[batch_id as usize];
            batches.push(ChunkFile {
                batch_id,
                segment_id: seg.segment_id,
                path: chunk_path(batch_id),
                feature_offset: 0,
                feature_len,
                sample_offset: feature_len,
                sample_len: sample.to_record().len() as u64,
                packed,
            });
        }
    }
    Ok(LayoutManifest {
        version: LAYOUT_VERSION,
        num_nodes: header.num_nodes,
        dim: header.dim,
        page_size: header.page_size,
        row_bytes: header.row_bytes(),
        fpp: geom.fpp(),
        num_hops: input.samples.num_hops() as u32,
        segment_size: plan.segment_size,
        threshold: plan.threshold,
        space_budget: plan.space_budget,
        address_tables: ADDRESS_TABLES.to_string(),
        fast_tier: TierFile {
            path: "tier_fast.bin".into(),
            nodes: input.tiers.fast_nodes.clone(),
        },
        host_tier: TierFile {
            path: "tier_host.bin".into(),
            nodes: input.tiers.host_nodes.clone(),
        },
        segments,
        batches,
    })
}

fn prepare_dirs(out_dir: &Path) -> Result<()> {
    for sub in ["chunks", "cache"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::at(&d, e))?;
    }
    Ok(())
}

/// Writes address tables and the manifest, then reopens the layout.
fn finish_layout(
    input: &PackInput<'_>,
    out_dir: &Path,
    manifest: LayoutManifest,
    cleanup: &mut Cleanup,
) -> Result<(DiskLayout, u64)> {
    let tables = build_address_tables(input.samples, input.tiers, &manifest)?;
    let tables_path = out_dir.join(&manifest.address_tables);
    cleanup.paths.push(tables_path.clone());
    tables.write(&tables_path)?;
    let manifest_path = out_dir.join(LAYOUT_MANIFEST);
    cleanup.paths.push(manifest_path.clone());
    std::fs::write(&manifest_path, manifest.to_toml()?).map_err(|e| Error::at(&manifest_path, e))?;

    let page = u64::from(manifest.page_size);
    let geom = manifest.geometry();
    let written = manifest
        .batches
        .iter()
        .map(|c| c.file_len(manifest.page_size))
        .chain(manifest.segments.iter().map(|s| geom.bytes_for(s.nodes.len() as u64)))
        .chain(
            [&manifest.fast_tier, &manifest.host_tier]
                .iter()
                .map(|t| geom.bytes_for(t.nodes.len() as u64)),
        )
        .sum::<u64>()
        / page;
    Ok((
        DiskLayout {
            dir: out_dir.to_path_buf(),
            manifest,
            tables,
        },
        written,
    ))
}

fn open_source(features: &FeatureFile) -> Result<(PageFile, Arc<IoCounters>)> {
    let counters = Arc::new(IoCounters::new(features.header.page_size));
    let file = PageFile::open(&features.path, counters.clone(), false)?;
    Ok((file, counters))
}

/// Row `v` inside a buffer holding consecutive data pages starting at
/// `first_page`.
fn row_in<'d>(data: &'d [u8], header: &FeatureHeader, first_page: u64, v: NodeId) -> &'d [u8] {
    let geom = header.geometry();
    let local = u64::from(v) - first_page * u64::from(geom.fpp());
    let at = geom.slot_offset(local) as usize;
    &data[at..at + geom.row_bytes as usize]
}

/// Destination buffered one page at a time and flushed by appending.
struct Appender {
    path: PathBuf,
    page: Vec<u8>,
    rows: u32,
    total_rows: u64,
}

impl Appender {
    fn new(path: PathBuf, page_size: u32) -> Self {
        Self {
            path,
            page: vec![0; page_size as usize],
            rows: 0,
            total_rows: 0,
        }
    }

    fn append(&self, bytes: &[u8]) -> Result<()> {
        let mut f = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::at(&self.path, e))?;
        f.write_all(bytes).map_err(|e| Error::at(&self.path, e))
    }

    fn push(&mut self, row: &[u8], fpp: u32) -> Result<()> {
        let at = self.rows as usize * row.len();
        self.page[at..at + row.len()].copy_from_slice(row);
        self.rows += 1;
        self.total_rows += 1;
        if self.rows == fpp {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.rows > 0 {
            self.append(&self.page)?;
            self.page.fill(0);
            self.rows = 0;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Dest {
    Append(usize),
    Cache { segment: usize, pos: u32 },
}

/// Batched packing: streams the source once in partitions of consecutive
/// node IDs and routes every needed row to all of its destinations.
///
/// Within a partition, each maximal run of pages holding at least one needed
/// row is fetched with one sequential read; pages nobody needs are skipped,
/// so no source page is read twice and untouched pages are never read.
/// Partitions hold `(mem_budget - page_size * N) / page_size` pages, where
/// `N` counts the one-page append buffers (one per chunk plus the two tier
/// files).
pub fn batched_pack(
    input: PackInput<'_>,
    out_dir: &Path,
    mem_budget: u64,
) -> Result<(DiskLayout, PackReport)> {
    let start = Instant::now();
    let manifest = layout_manifest(&input)?;
    let header = input.features.header;
    let geom = header.geometry();
    let page = u64::from(header.page_size);
    let fpp = geom.fpp();
    let buffers = manifest.batches.len() + 2;
    let partition_pages = mem_budget
        .checked_sub(page * buffers as u64)
        .map(|rest| rest / page)
        .filter(|&p| p > 0)
        .ok_or(Error::PackingBudget {
            budget: mem_budget,
            page_size: header.page_size,
            buffers,
        })?;

    prepare_dirs(out_dir)?;
    let mut cleanup = Cleanup::new();
    let mut appenders = Vec::with_capacity(buffers);
    for c in &manifest.batches {
        cleanup.create(out_dir.join(&c.path))?;
        appenders.push(Appender::new(out_dir.join(&c.path), header.page_size));
    }
    for t in [&manifest.fast_tier, &manifest.host_tier] {
        cleanup.create(out_dir.join(&t.path))?;
        appenders.push(Appender::new(out_dir.join(&t.path), header.page_size));
    }
    for s in &manifest.segments {
        let path = out_dir.join(&s.path);
        let f = cleanup.create(path.clone())?;
        f.set_len(geom.bytes_for(s.nodes.len() as u64))
            .map_err(|e| Error::at(&path, e))?;
    }

    let mut routes: Vec<Vec<Dest>> = vec![Vec::new(); header.num_nodes as usize];
    for (b, c) in manifest.batches.iter().enumerate() {
        for &v in &c.packed {
            routes[v as usize].push(Dest::Append(b));
        }
    }
    let nb = manifest.batches.len();
    for (t, tier) in [&manifest.fast_tier, &manifest.host_tier].iter().enumerate() {
        for &v in &tier.nodes {
            routes[v as usize].push(Dest::Append(nb + t));
        }
    }
    for (segment, s) in manifest.segments.iter().enumerate() {
        for (pos, &v) in s.nodes.iter().enumerate() {
            routes[v as usize].push(Dest::Cache {
                segment,
                pos: pos as u32,
            });
        }
    }
    let data_pages = header.data_pages();
    let mut touched = vec![false; data_pages as usize];
    for (v, r) in routes.iter().enumerate() {
        if !r.is_empty() {
            touched[v / fpp as usize] = true;
        }
    }

    let (source, counters) = open_source(input.features)?;
    let mut partitions = 0;
    let mut p0 = 0;
    while p0 < data_pages {
        let p_end = (p0 + partition_pages).min(data_pages);
        let mut cache_writes: Vec<(usize, u32, Vec<u8>)> = Vec::new();
        let mut p = p0;
        let mut any = false;
        while p < p_end {
            if !touched[p as usize] {
                p += 1;
                continue;
            }
            let run_start = p;
            while p < p_end && touched[p as usize] {
                p += 1;
            }
            any = true;
            let data = source.read_sequential(
                header.data_offset() + run_start * page,
                (p - run_start) * page,
            )?;
            let lo = run_start * u64::from(fpp);
            let hi = (p * u64::from(fpp)).min(header.num_nodes);
            for v in lo..hi {
                let v = v as NodeId;
                for &d in &routes[v as usize] {
                    let row = row_in(&data, &header, run_start, v);
                    match d {
                        Dest::Append(i) => appenders[i].push(row, fpp)?,
                        Dest::Cache { segment, pos } => {
                            cache_writes.push((segment, pos, row.to_vec()))
                        }
                    }
                }
            }
        }
        if any {
            partitions += 1;
        }
        cache_writes.sort_by_key(|w| (w.0, w.1));
        for group in cache_writes.chunk_by(|a, b| a.0 == b.0) {
            let path = out_dir.join(&manifest.segments[group[0].0].path);
            let f = OpenOptions::new()
                .write(true)
                .open(&path)
                .map_err(|e| Error::at(&path, e))?;
            for (_, pos, row) in group {
                f.write_all_at(row, geom.slot_offset(u64::from(*pos)))
                    .map_err(|e| Error::at(&path, e))?;
            }
        }
        p0 = p_end;
    }

    for a in &mut appenders {
        a.flush()?;
    }
    for (c, a) in manifest.batches.iter().zip(&appenders) {
        if a.total_rows != c.packed.len() as u64 {
            return Err(Error::inconsistent(format!(
                "chunk {} received {} rows, expected {}",
                c.batch_id,
                a.total_rows,
                c.packed.len()
            )));
        }
        let mut section = Vec::new();
        embed_graph_sample(&mut section, &input.samples.batches[c.batch_id as usize], header.page_size);
        a.append(&section)?;
    }

    let stats = counters.snapshot();
    let (layout, pages_written) = finish_layout(&input, out_dir, manifest, &mut cleanup)?;
    cleanup.disarm();
    Ok((
        layout,
        PackReport {
            mode: PackMode::Batched,
            source_pages_read: stats.pages_read,
            source_read_ops: stats.sequential_ops + stats.random_ops,
            pages_written,
            partitions,
            partition_pages,
            wall_secs: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Individual packing: builds each destination in turn, fetching the page of
/// every row it needs with its own read. Shared pages are read again for
/// every destination that needs them.
pub fn individual_pack(input: PackInput<'_>, out_dir: &Path) -> Result<(DiskLayout, PackReport)> {
    let start = Instant::now();
    let manifest = layout_manifest(&input)?;
    let header = input.features.header;
    let geom = header.geometry();
    let (source, counters) = open_source(input.features)?;
    let fetch = |nodes: &[NodeId]| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; geom.bytes_for(nodes.len() as u64) as usize];
        for (i, &v) in nodes.iter().enumerate() {
            let file_page = header.header_pages() + header.page_of(v);
            let pages = source.read_pages(&[file_page], 1)?;
            let row = row_in(&pages[0].1, &header, header.page_of(v), v);
            let at = geom.slot_offset(i as u64) as usize;
            buf[at..at + row.len()].copy_from_slice(row);
        }
        Ok(buf)
    };

    prepare_dirs(out_dir)?;
    let mut cleanup = Cleanup::new();
    let write = |rel: &str, data: &[u8], cleanup: &mut Cleanup| -> Result<()> {
        let path = out_dir.join(rel);
        let mut f = cleanup.create(path.clone())?;
        f.write_all(data).map_err(|e| Error::at(&path, e))
    };
    for c in &manifest.batches {
        let mut chunk = fetch(&c.packed)?;
        embed_graph_sample(&mut chunk, &input.samples.batches[c.batch_id as usize], header.page_size);
        write(&c.path, &chunk, &mut cleanup)?;
    }
    for s in &manifest.segments {
        write(&s.path, &fetch(&s.nodes)?, &mut cleanup)?;
    }
    for t in [&manifest.fast_tier, &manifest.host_tier] {
        write(&t.path, &fetch(&t.nodes)?, &mut cleanup)?;
    }

    let stats = counters.snapshot();
    let (layout, pages_written) = finish_layout(&input, out_dir, manifest, &mut cleanup)?;
    cleanup.disarm();
    Ok((
        layout,
        PackReport {
            mode: PackMode::Individual,
            source_pages_read: stats.pages_read,
            source_read_ops: stats.sequential_ops + stats.random_ops,
            pages_written,
            partitions: 0,
            partition_pages: 0,
            wall_secs: start.elapsed().as_secs_f64(),
        },
    ))
}
