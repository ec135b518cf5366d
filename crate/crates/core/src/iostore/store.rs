use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::os::unix::fs::FileExt;
use std::sync::Arc;

use super::{IoCounters, IoStats, PageFile};
use crate::error::{Error, Result};
use crate::packer::{DiskLayout, Location};
use crate::planner::{MemoryTierPlan, Tier};
use crate::reorder::CacheOrder;
use crate::workload::{FeatureFile, GraphSample, PageGeometry, SampleSet};
use crate::NodeId;

/// Disk-sourced rows of one batch staged in host memory: packed-chunk rows
/// first, then cache rows. `slots[i]` names the node in row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialInput {
    pub batch_id: u64,
    pub slots: Vec<NodeId>,
    pub rows: Vec<f32>,
}

/// Output of the assembling step: one row per required node, in the batch's
/// node order.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledFeatures {
    pub batch_id: u64,
    pub nodes: Vec<NodeId>,
    pub rows: Vec<f32>,
}

/// Features paired with their graph sample, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledBatch {
    pub features: AssembledFeatures,
    pub sample: GraphSample,
}

impl AssembledBatch {
    /// Pairs features with a sample, checking they describe the same batch.
    pub fn pair(features: AssembledFeatures, sample: GraphSample) -> Result<Self> {
        if features.batch_id != sample.batch_id || features.nodes != sample.nodes {
            return Err(Error::Pipeline(format!(
                "features of batch {} paired with sample of batch {}",
                features.batch_id, sample.batch_id
            )));
        }
        Ok(Self { features, sample })
    }

    pub fn batch_id(&self) -> u64 {
        self.sample.batch_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreOptions {
    /// Open files with `O_DIRECT` where the filesystem allows it.
    pub direct_io: bool,
    /// Threads issuing one batch's random page reads.
    pub io_threads: usize,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            direct_io: false,
            io_threads: 1,
        }
    }
}

/// A source of per-batch training inputs, split into the steps the pipeline
/// runs on separate workers.
pub trait FeatureSource: Send + Sync {
    fn num_batches(&self) -> usize;

    fn dim(&self) -> u32;

    /// Step one: read the batch's disk-resident features.
    fn load_features(&self, batch_id: u64) -> Result<PartialInput>;

    fn load_sample(&self, batch_id: u64) -> Result<GraphSample>;

    /// Features and sample together, sharing reads where the layout allows.
    fn load_partial_input(&self, batch_id: u64) -> Result<(PartialInput, GraphSample)> {
        Ok((self.load_features(batch_id)?, self.load_sample(batch_id)?))
    }

    /// Step two: merge partial input with the memory tiers.
    fn assemble(&self, partial: PartialInput) -> Result<AssembledFeatures>;

    fn stats(&self) -> IoStats;
}

/// Distinct cache pages covering `nodes` under `order`, ascending.
pub fn merge_page_requests(nodes: &[NodeId], order: &CacheOrder, fpp: u32) -> Result<Vec<u32>> {
    let pages = nodes
        .iter()
        .map(|&v| {
            order.locate(v, fpp).map(|(p, _)| p).ok_or_else(|| {
                Error::inconsistent(format!(
                    "node {v} is not in the cache of segment {}",
                    order.segment_id
                ))
            })
        })
        .collect::<Result<BTreeSet<u32>>>()?;
    Ok(pages.into_iter().collect())
}

fn decode_rows(bytes: &[u8], geom: PageGeometry, count: usize, out: &mut Vec<f32>) {
    let rb = geom.row_bytes as usize;
    for i in 0..count {
        let at = geom.slot_offset(i as u64) as usize;
        out.extend(
            bytes[at..at + rb]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
    }
}

fn row(rows: &[f32], dim: usize, i: usize) -> Result<&[f32]> {
    rows.get(i * dim..(i + 1) * dim)
        .ok_or_else(|| Error::inconsistent(format!("row {i} outside its buffer")))
}

fn partial_row(partial: &PartialInput, dim: usize, slot: usize, v: NodeId) -> Result<&[f32]> {
    if partial.slots.get(slot) != Some(&v) {
        return Err(Error::inconsistent(format!(
            "batch {}: partial slot {slot} does not hold node {v}",
            partial.batch_id
        )));
    }
    row(&partial.rows, dim, slot)
}

/// Reads a packed layout: one sequential read per chunk, merged random page
/// reads for the segment caches, memory tiers held in RAM.
#[derive(Debug)]
pub struct LayoutStore {
    layout: DiskLayout,
    options: StoreOptions,
    counters: Arc<IoCounters>,
    caches: Vec<Option<PageFile>>,
    fast: Vec<f32>,
    host: Vec<f32>,
}

impl LayoutStore {
    /// Opens cache files and loads both tier files into memory. Tier loading
    /// happens once, before training, and is not charged to the counters.
    pub fn open(layout: DiskLayout, options: StoreOptions) -> Result<Self> {
        let m = &layout.manifest;
        let geom = m.geometry();
        let counters = Arc::new(IoCounters::new(m.page_size));
        let caches = m
            .segments
            .iter()
            .map(|s| {
                (!s.nodes.is_empty())
                    .then(|| PageFile::open(&layout.path(&s.path), counters.clone(), options.direct_io))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let load_tier = |t: &crate::packer::TierFile| -> Result<Vec<f32>> {
            let path = layout.path(&t.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::at(&path, e))?;
            if bytes.len() as u64 != geom.bytes_for(t.nodes.len() as u64) {
                return Err(Error::format(format!(
                    "{} is {} bytes, manifest implies {}",
                    path.display(),
                    bytes.len(),
                    geom.bytes_for(t.nodes.len() as u64)
                )));
            }
            let mut rows = Vec::with_capacity(t.nodes.len() * m.dim as usize);
            decode_rows(&bytes, geom, t.nodes.len(), &mut rows);
            Ok(rows)
        };
        let fast = load_tier(&m.fast_tier)?;
        let host = load_tier(&m.host_tier)?;
        Ok(Self {
            options,
            counters,
            caches,
            fast,
            host,
            layout,
        })
    }

    pub fn layout(&self) -> &DiskLayout {
        &self.layout
    }

    fn chunk_file(&self, batch_id: u64) -> Result<(&crate::packer::ChunkFile, PageFile)> {
        let chunk = self
            .layout
            .manifest
            .batches
            .get(batch_id as usize)
            .filter(|c| c.batch_id == batch_id)
            .ok_or_else(|| Error::invalid(format!("layout has no batch {batch_id}")))?;
        let file = PageFile::open(
            &self.layout.path(&chunk.path),
            self.counters.clone(),
            self.options.direct_io,
        )?;
        Ok((chunk, file))
    }

    fn decode_sample(&self, batch_id: u64, bytes: &[u8]) -> Result<GraphSample> {
        let len = self.layout.manifest.batches[batch_id as usize].sample_len as usize;
        let s = GraphSample::from_record(&bytes[..len], self.layout.manifest.num_hops as usize)?;
        if s.batch_id != batch_id {
            return Err(Error::inconsistent(format!(
                "chunk of batch {batch_id} embeds sample of batch {}",
                s.batch_id
            )));
        }
        Ok(s)
    }

    /// Builds the partial input from the chunk's feature region (already
    /// read) plus merged cache page reads.
    fn build_partial(&self, batch_id: u64, feature_region: &[u8]) -> Result<PartialInput> {
        let m = &self.layout.manifest;
        let geom = m.geometry();
        let chunk = &m.batches[batch_id as usize];
        let table = self
            .layout
            .tables
            .get(batch_id)
            .ok_or_else(|| Error::inconsistent(format!("no address table for batch {batch_id}")))?;

        let mut slots = chunk.packed.clone();
        let mut rows = Vec::with_capacity(table.entries.len() * m.dim as usize);
        decode_rows(feature_region, geom, chunk.packed.len(), &mut rows);

        let cached: Vec<(NodeId, u32, u32)> = table
            .entries
            .iter()
            .filter_map(|&(v, loc)| match loc {
                Location::Cache { page, slot } => Some((v, page, slot)),
                _ => None,
            })
            .collect();
        if !cached.is_empty() {
            let file = self.caches[chunk.segment_id as usize].as_ref().ok_or_else(|| {
                Error::inconsistent(format!("segment {} has no cache file", chunk.segment_id))
            })?;
            let pages: Vec<u64> = cached.iter().map(|c| u64::from(c.1)).collect();
            let fetched: HashMap<u64, Vec<u8>> =
                file.read_pages(&pages, self.options.io_threads)?.into_iter().collect();
            let rb = geom.row_bytes as usize;
            for &(v, page, slot) in &cached {
                let at = slot as usize * rb;
                let bytes = &fetched[&u64::from(page)][at..at + rb];
                rows.extend(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
                slots.push(v);
            }
        }
        self.counters
            .add_required(slots.len() as u64 * u64::from(m.row_bytes));
        Ok(PartialInput {
            batch_id,
            slots,
            rows,
        })
    }
}

impl FeatureSource for LayoutStore {
    fn num_batches(&self) -> usize {
        self.layout.num_batches()
    }

    fn dim(&self) -> u32 {
        self.layout.manifest.dim
    }

    fn load_features(&self, batch_id: u64) -> Result<PartialInput> {
        let (chunk, file) = self.chunk_file(batch_id)?;
        let region = if chunk.feature_len > 0 {
            file.read_sequential(chunk.feature_offset, chunk.feature_len)?
        } else {
            Vec::new()
        };
        self.build_partial(batch_id, &region)
    }

    fn load_sample(&self, batch_id: u64) -> Result<GraphSample> {
        let (chunk, file) = self.chunk_file(batch_id)?;
        let page_size = self.layout.manifest.page_size;
        let span = chunk.sample_span(page_size);
        let bytes = file.read_sequential(chunk.sample_offset, span)?;
        self.counters.add_sample_pages(span / u64::from(page_size));
        self.decode_sample(batch_id, &bytes)
    }

    /// One sequential read spans the feature region and the sample section.
    fn load_partial_input(&self, batch_id: u64) -> Result<(PartialInput, GraphSample)> {
        let (chunk, file) = self.chunk_file(batch_id)?;
        let page_size = self.layout.manifest.page_size;
        let span = chunk.sample_span(page_size);
        let bytes = file.read_sequential(chunk.feature_offset, chunk.feature_len + span)?;
        self.counters.add_sample_pages(span / u64::from(page_size));
        let (features, sample) = bytes.split_at(chunk.feature_len as usize);
        let sample = self.decode_sample(batch_id, sample)?;
        Ok((self.build_partial(batch_id, features)?, sample))
    }

    fn assemble(&self, partial: PartialInput) -> Result<AssembledFeatures> {
        let dim = self.layout.manifest.dim as usize;
        let table = self.layout.tables.get(partial.batch_id).ok_or_else(|| {
            Error::inconsistent(format!("no address table for batch {}", partial.batch_id))
        })?;
        let num_packed = self.layout.manifest.batches[partial.batch_id as usize].packed.len();
        let mut next_cached = num_packed;
        let mut nodes = Vec::with_capacity(table.entries.len());
        let mut rows = Vec::with_capacity(table.entries.len() * dim);
        for &(v, loc) in &table.entries {
            let src = match loc {
                Location::Fast(s) => row(&self.fast, dim, s as usize)?,
                Location::Host(s) => row(&self.host, dim, s as usize)?,
                Location::Packed(i) => partial_row(&partial, dim, i as usize, v)?,
                Location::Cache { .. } => {
                    next_cached += 1;
                    partial_row(&partial, dim, next_cached - 1, v)?
                }
            };
            nodes.push(v);
            rows.extend_from_slice(src);
        }
        Ok(AssembledFeatures {
            batch_id: partial.batch_id,
            nodes,
            rows,
        })
    }

    fn stats(&self) -> IoStats {
        self.counters.snapshot()
    }
}

/// Baseline without packing or disk caching: every required feature outside
/// the memory tiers costs one random page read of the source file, even when
/// several of them share a page. Samples are served from memory.
#[derive(Debug)]
pub struct FineGrainedStore {
    header: crate::workload::FeatureHeader,
    source: PageFile,
    counters: Arc<IoCounters>,
    samples: SampleSet,
    tiers: MemoryTierPlan,
    fast: Vec<f32>,
    host: Vec<f32>,
}

impl FineGrainedStore {
    pub fn open(
        features: &FeatureFile,
        samples: SampleSet,
        tiers: MemoryTierPlan,
        options: StoreOptions,
    ) -> Result<Self> {
        let header = features.header;
        samples.validate(header.num_nodes)?;
        let counters = Arc::new(IoCounters::new(header.page_size));
        let source = PageFile::open(&features.path, counters.clone(), options.direct_io)?;
        let file = File::open(&features.path).map_err(|e| Error::at(&features.path, e))?;
        let load = |nodes: &[NodeId]| -> Result<Vec<f32>> {
            let mut out = Vec::with_capacity(nodes.len() * header.dim as usize);
            let mut buf = vec![0u8; header.row_bytes() as usize];
            for &v in nodes {
                if u64::from(v) >= header.num_nodes {
                    return Err(Error::invalid(format!("tier node {v} outside feature file")));
                }
                file.read_exact_at(&mut buf, header.row_offset(v))
                    .map_err(|e| Error::at(&features.path, e))?;
                out.extend(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
            }
            Ok(out)
        };
        let fast = load(&tiers.fast_nodes)?;
        let host = load(&tiers.host_nodes)?;
        Ok(Self {
            header,
            source,
            counters,
            samples,
            tiers,
            fast,
            host,
        })
    }

    fn sample(&self, batch_id: u64) -> Result<&GraphSample> {
        self.samples
            .batches
            .get(batch_id as usize)
            .ok_or_else(|| Error::invalid(format!("no batch {batch_id}")))
    }
}

impl FeatureSource for FineGrainedStore {
    fn num_batches(&self) -> usize {
        self.samples.len()
    }

    fn dim(&self) -> u32 {
        self.header.dim
    }

    fn load_features(&self, batch_id: u64) -> Result<PartialInput> {
        let h = self.header;
        let rb = h.row_bytes() as usize;
        let mut slots = Vec::new();
        let mut rows = Vec::new();
        for &v in &self.sample(batch_id)?.nodes {
            if self.tiers.is_cached(v) {
                continue;
            }
            let page = h.header_pages() + h.page_of(v);
            let data = self.source.read_pages(&[page], 1)?;
            let at = (h.row_offset(v) - page * u64::from(h.page_size)) as usize;
            rows.extend(
                data[0].1[at..at + rb]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
            );
            slots.push(v);
        }
        self.counters.add_required((slots.len() * rb) as u64);
        Ok(PartialInput {
            batch_id,
            slots,
            rows,
        })
    }

    fn load_sample(&self, batch_id: u64) -> Result<GraphSample> {
        self.sample(batch_id).cloned()
    }

    fn assemble(&self, partial: PartialInput) -> Result<AssembledFeatures> {
        let dim = self.header.dim as usize;
        let index: HashMap<NodeId, usize> =
            partial.slots.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let nodes = self.sample(partial.batch_id)?.nodes.clone();
        let mut rows = Vec::with_capacity(nodes.len() * dim);
        for &v in &nodes {
            let src = match self.tiers.slot_of(v) {
                Some((Tier::Fast, s)) => row(&self.fast, dim, s as usize)?,
                Some((Tier::Host, s)) => row(&self.host, dim, s as usize)?,
                None => {
                    let i = *index.get(&v).ok_or_else(|| {
                        Error::inconsistent(format!(
                            "batch {}: node {v} missing from partial input",
                            partial.batch_id
                        ))
                    })?;
                    row(&partial.rows, dim, i)?
                }
            };
            rows.extend_from_slice(src);
        }
        Ok(AssembledFeatures {
            batch_id: partial.batch_id,
            nodes,
            rows,
        })
    }

    fn stats(&self) -> IoStats {
        self.counters.snapshot()
    }
}
