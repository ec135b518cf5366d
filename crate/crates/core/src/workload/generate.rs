use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, generate_sampleset, generate_synthetic_graph, write_synthetic_features,
    FeatureFile, Graph, SampleSet,
};
use crate::error::{Error, Result};
use crate::NodeId;

pub const GRAPH_FILE: &str = "graph.bin";
pub const FEATURE_FILE: &str = "features.bin";
pub const SAMPLE_FILE: &str = "samples.bin";

/// Parameters of a synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadParams {
    pub num_nodes: usize,
    pub avg_degree: usize,
    pub skew: f64,
    pub dim: u32,
    pub page_size: u32,
    pub batch_size: usize,
    pub fanout: Vec<u32>,
    /// Batches to sample; `None` uses every node as a seed once.
    pub num_batches: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub graph: Graph,
    pub features: FeatureFile,
    pub samples: SampleSet,
}

impl WorkloadParams {
    /// Seed nodes: a seeded shuffle of all nodes, truncated to the requested
    /// number of batches.
    pub fn seed_nodes(&self) -> Vec<NodeId> {
        let mut seeds: Vec<NodeId> = (0..self.num_nodes as NodeId).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, 0x5eed]));
        seeds.shuffle(&mut rng);
        if let Some(n) = self.num_batches {
            seeds.truncate(n.saturating_mul(self.batch_size));
        }
        seeds
    }
}

/// Generates graph, features and samples and writes all three into `dir`.
pub fn generate_workload(dir: &Path, params: &WorkloadParams) -> Result<Workload> {
    if let Some(n) = params.num_batches {
        if n.saturating_mul(params.batch_size) > params.num_nodes {
            return Err(Error::invalid(format!(
                "{n} batches of {} seeds need more than {} nodes",
                params.batch_size, params.num_nodes
            )));
        }
    }
    let graph = generate_synthetic_graph(
        params.num_nodes,
        params.avg_degree,
        params.skew,
        derive_seed(&[params.seed, 1]),
    )?;
    let samples = generate_sampleset(
        &graph,
        &params.seed_nodes(),
        params.batch_size,
        &params.fanout,
        derive_seed(&[params.seed, 2]),
    )?;
    std::fs::create_dir_all(dir).map_err(|e| Error::at(dir, e))?;
    let features = write_synthetic_features(
        &dir.join(FEATURE_FILE),
        params.num_nodes as u64,
        params.dim,
        params.page_size,
        derive_seed(&[params.seed, 3]),
    )?;
    graph.write(&dir.join(GRAPH_FILE))?;
    samples.write(&dir.join(SAMPLE_FILE))?;
    Ok(Workload {
        graph,
        features,
        samples,
    })
}

/// Paths of the three workload files under `dir`.
pub fn workload_paths(dir: &Path) -> [PathBuf; 3] {
    [GRAPH_FILE, FEATURE_FILE, SAMPLE_FILE].map(|f| dir.join(f))
}
