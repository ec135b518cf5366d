use std::collections::HashSet;
use std::path::Path;

use super::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::NodeId;

const SAMPLES_MAGIC: &[u8; 4] = b"OOCS";
const SAMPLES_VERSION: u32 = 1;

/// One sampled mini-batch: its seed nodes, every node whose feature it needs,
/// and the sampled edges layered by hop.
///
/// `nodes` starts with the seeds. Edges are `(frontier, neighbor)` pairs of
/// local indices into `nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSample {
    pub batch_id: u64,
    pub num_seeds: u32,
    pub nodes: Vec<NodeId>,
    pub hops: Vec<Vec<(u32, u32)>>,
}

impl GraphSample {
    pub fn seeds(&self) -> &[NodeId] {
        &self.nodes[..self.num_seeds as usize]
    }

    pub fn num_edges(&self) -> usize {
        self.hops.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_seeds as usize > self.nodes.len() {
            return Err(Error::invalid(format!(
                "batch {}: {} seeds but only {} nodes",
                self.batch_id,
                self.num_seeds,
                self.nodes.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.nodes.len());
        if let Some(dup) = self.nodes.iter().find(|v| !seen.insert(**v)) {
            return Err(Error::invalid(format!(
                "batch {}: node {dup} listed twice",
                self.batch_id
            )));
        }
        let n = self.nodes.len() as u32;
        for (h, edges) in self.hops.iter().enumerate() {
            if let Some(e) = edges.iter().find(|(a, b)| *a >= n || *b >= n) {
                return Err(Error::invalid(format!(
                    "batch {}: hop {h} edge {e:?} out of range for {n} nodes",
                    self.batch_id
                )));
            }
        }
        Ok(())
    }

    /// Appends this batch's record (the per-batch layout of the sample-set
    /// file) to `w`.
    pub(crate) fn encode_into(&self, w: &mut ByteWriter) {
        w.u64(self.batch_id);
        w.u32(self.num_seeds);
        w.u32(self.nodes.len() as u32);
        w.u32(self.num_edges() as u32);
        for &v in &self.nodes {
            w.u64(u64::from(v));
        }
        for edges in &self.hops {
            w.u32(edges.len() as u32);
            for &(a, b) in edges {
                w.u32(a);
                w.u32(b);
            }
        }
    }

    pub fn to_record(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.encode_into(&mut w);
        w.into_inner()
    }

    pub(crate) fn decode_from(r: &mut ByteReader<'_>, num_hops: usize) -> Result<Self> {
        let batch_id = r.u64()?;
        let num_seeds = r.u32()?;
        let num_nodes = r.u32()?;
        let num_edges = r.u32()?;
        let nodes = (0..num_nodes)
            .map(|_| {
                let v = r.u64()?;
                NodeId::try_from(v).map_err(|_| Error::format(format!("node id {v} too large")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut hops = Vec::with_capacity(num_hops);
        let mut total = 0u64;
        for _ in 0..num_hops {
            let count = r.u32()?;
            total += u64::from(count);
            if total > u64::from(num_edges) {
                return Err(Error::format(format!(
                    "batch {batch_id}: per-hop edge counts exceed num_edges {num_edges}"
                )));
            }
            let edges = (0..count)
                .map(|_| Ok((r.u32()?, r.u32()?)))
                .collect::<Result<Vec<_>>>()?;
            hops.push(edges);
        }
        if total != u64::from(num_edges) {
            return Err(Error::format(format!(
                "batch {batch_id}: per-hop edge counts sum to {total}, header says {num_edges}"
            )));
        }
        let s = Self {
            batch_id,
            num_seeds,
            nodes,
            hops,
        };
        s.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(s)
    }

    pub fn from_record(data: &[u8], num_hops: usize) -> Result<Self> {
        let mut r = ByteReader::new(data, "graph sample record");
        let s = Self::decode_from(&mut r, num_hops)?;
        r.finish()?;
        Ok(s)
    }
}

/// The offline-sampled mini-batches of one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampleSet {
    pub fanout: Vec<u32>,
    pub batch_size: u32,
    pub rng_seed: u64,
    pub batches: Vec<GraphSample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn num_hops(&self) -> usize {
        self.fanout.len()
    }

    /// Checks batch ordering and that every node id lies below `num_nodes`.
    pub fn validate(&self, num_nodes: u64) -> Result<()> {
        for (i, b) in self.batches.iter().enumerate() {
            if b.batch_id != i as u64 {
                return Err(Error::invalid(format!(
                    "batch at position {i} has id {}",
                    b.batch_id
                )));
            }
            if b.hops.len() != self.fanout.len() {
                return Err(Error::invalid(format!(
                    "batch {i} has {} hops, fanout has {}",
                    b.hops.len(),
                    self.fanout.len()
                )));
            }
            b.validate()?;
            if let Some(v) = b.nodes.iter().find(|&&v| u64::from(v) >= num_nodes) {
                return Err(Error::invalid(format!(
                    "batch {i}: node {v} out of range for {num_nodes} nodes"
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(SAMPLES_MAGIC);
        w.u32(SAMPLES_VERSION);
        w.u64(self.batches.len() as u64);
        w.u32(self.fanout.len() as u32);
        for &f in &self.fanout {
            w.u32(f);
        }
        w.u32(self.batch_size);
        w.u64(self.rng_seed);
        for b in &self.batches {
            b.encode_into(&mut w);
        }
        w.into_inner()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data, "sample-set file");
        r.magic(SAMPLES_MAGIC)?;
        r.version(SAMPLES_VERSION)?;
        let n = r.u64()?;
        let hops = r.u32()? as usize;
        let fanout = (0..hops).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let batch_size = r.u32()?;
        let rng_seed = r.u64()?;
        let mut batches = Vec::new();
        for _ in 0..n {
            batches.push(GraphSample::decode_from(&mut r, hops)?);
        }
        r.finish()?;
        let set = Self {
            fanout,
            batch_size,
            rng_seed,
            batches,
        };
        set.validate(u64::from(NodeId::MAX) + 1)
            .map_err(|e| Error::format(e.to_string()))?;
        Ok(set)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::at(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::at(path, e))?;
        Self::from_bytes(&data)
    }
}
