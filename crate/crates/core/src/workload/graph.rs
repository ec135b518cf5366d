use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::NodeId;

const GRAPH_MAGIC: &[u8; 4] = b"OOCG";
const GRAPH_VERSION: u32 = 1;

/// Compressed out-adjacency of the data graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<u64>,
    neighbors: Vec<NodeId>,
}

impl Graph {
    /// Builds a graph from CSR arrays, checking every structural invariant.
    pub fn from_csr(offsets: Vec<u64>, neighbors: Vec<NodeId>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::invalid("offsets must have num_nodes + 1 entries"));
        }
        if offsets[0] != 0 {
            return Err(Error::invalid("offsets[0] must be 0"));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("offsets must be non-decreasing"));
        }
        if *offsets.last().unwrap() != neighbors.len() as u64 {
            return Err(Error::invalid(format!(
                "offsets[num_nodes] = {} but there are {} neighbors",
                offsets.last().unwrap(),
                neighbors.len()
            )));
        }
        let n = offsets.len() as u64 - 1;
        if n > u64::from(NodeId::MAX) {
            return Err(Error::invalid("too many nodes for 32-bit node ids"));
        }
        if let Some(bad) = neighbors.iter().find(|&&v| u64::from(v) >= n) {
            return Err(Error::invalid(format!(
                "neighbor id {bad} out of range for {n} nodes"
            )));
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn from_adjacency(lists: &[Vec<NodeId>]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for l in lists {
            neighbors.extend_from_slice(l);
            offsets.push(neighbors.len() as u64);
        }
        Self::from_csr(offsets, neighbors)
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.neighbors[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.neighbors(v).len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes() as NodeId)
            .map(|v| self.degree(v))
            .max()
            .unwrap_or(0)
    }

    pub fn in_degrees(&self) -> Vec<u64> {
        let mut deg = vec![0u64; self.num_nodes()];
        for &v in &self.neighbors {
            deg[v as usize] += 1;
        }
        deg
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(GRAPH_MAGIC);
        w.u32(GRAPH_VERSION);
        w.u64(self.num_nodes() as u64);
        w.u64(self.num_edges() as u64);
        for &o in &self.offsets {
            w.u64(o);
        }
        for &v in &self.neighbors {
            w.u64(u64::from(v));
        }
        w.into_inner()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data, "graph file");
        r.magic(GRAPH_MAGIC)?;
        r.version(GRAPH_VERSION)?;
        let n = r.u64()?;
        let m = r.u64()?;
        let expected = n
            .checked_add(1)
            .and_then(|x| x.checked_add(m))
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| Error::format("graph file: size overflow"))?;
        if (data.len() - r.position()) as u64 != expected {
            return Err(Error::format(format!(
                "graph file: body is {} bytes, header implies {expected}",
                data.len() - r.position()
            )));
        }
        let offsets = (0..=n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let neighbors = (0..m)
            .map(|_| {
                let v = r.u64()?;
                NodeId::try_from(v).map_err(|_| Error::format(format!("neighbor id {v} too large")))
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Self::from_csr(offsets, neighbors).map_err(|e| Error::format(format!("graph file: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::at(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::at(path, e))?;
        Self::from_bytes(&data)
    }
}

/// Generates a directed graph in which every node has `avg_degree` distinct
/// out-neighbors whose popularity follows a Zipf law with exponent `skew`.
///
/// Popularity ranks are assigned through a seeded permutation, so hot nodes
/// are scattered over the ID space rather than clustered at small IDs.
pub fn generate_synthetic_graph(
    num_nodes: usize,
    avg_degree: usize,
    skew: f64,
    rng_seed: u64,
) -> Result<Graph> {
    if num_nodes == 0 {
        return Err(Error::invalid("num_nodes must be at least 1"));
    }
    if avg_degree >= num_nodes {
        return Err(Error::invalid(format!(
            "avg_degree {avg_degree} must be smaller than num_nodes {num_nodes}"
        )));
    }
    if !(skew >= 0.0 && skew.is_finite()) {
        return Err(Error::invalid(format!("skew must be finite and >= 0, got {skew}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut by_rank: Vec<NodeId> = (0..num_nodes as NodeId).collect();
    by_rank.shuffle(&mut rng);
    let zipf = Zipf::new(num_nodes as f64, skew)
        .map_err(|e| Error::invalid(format!("zipf parameters: {e}")))?;

    let mut lists = Vec::with_capacity(num_nodes);
    let mut taken = vec![false; num_nodes];
    for u in 0..num_nodes as NodeId {
        let mut out: Vec<NodeId> = Vec::with_capacity(avg_degree);
        taken[u as usize] = true;
        let mut attempts = 0usize;
        let budget = 64 * avg_degree + 64;
        while out.len() < avg_degree && attempts < budget {
            attempts += 1;
            let rank = zipf.sample(&mut rng) as usize - 1;
            let v = by_rank[rank.min(num_nodes - 1)];
            if !taken[v as usize] {
                taken[v as usize] = true;
                out.push(v);
            }
        }
        if out.len() < avg_degree {
            // Rejection stalls when the head of the distribution is exhausted;
            // finish with uniform draws over the remaining candidates.
            let mut rest: Vec<NodeId> = (0..num_nodes as NodeId)
                .filter(|&v| !taken[v as usize])
                .collect();
            while out.len() < avg_degree {
                let i = rng.random_range(0..rest.len());
                let v = rest.swap_remove(i);
                taken[v as usize] = true;
                out.push(v);
            }
        }
        taken[u as usize] = false;
        for &v in &out {
            taken[v as usize] = false;
        }
        out.sort_unstable();
        lists.push(out);
    }
    Graph::from_adjacency(&lists)
}
