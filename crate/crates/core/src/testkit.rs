//! Fixtures shared by unit tests.

use std::path::Path;

use crate::packer::{batched_pack, DiskLayout, PackInput};
use crate::planner::{assign_memory_tiers, build_disk_plan, count_frequencies, DiskPlan, MemoryTierPlan};
use crate::reorder::{CacheOrder, Reorderer};
use crate::workload::{generate_workload, FeatureFile, GraphSample, SampleSet, WorkloadParams};
use crate::NodeId;

pub fn sample_set(batches: Vec<Vec<NodeId>>) -> SampleSet {
    SampleSet {
        fanout: vec![0],
        batch_size: 1,
        rng_seed: 0,
        batches: batches
            .into_iter()
            .enumerate()
            .map(|(i, nodes)| GraphSample {
                batch_id: i as u64,
                num_seeds: nodes.len().min(1) as u32,
                nodes,
                hops: vec![vec![]],
            })
            .collect(),
    }
}

pub struct Case {
    pub features: FeatureFile,
    pub samples: SampleSet,
    pub tiers: MemoryTierPlan,
    pub plan: DiskPlan,
    pub orders: Vec<CacheOrder>,
}

impl Case {
    pub fn input(&self) -> PackInput<'_> {
        PackInput {
            features: &self.features,
            samples: &self.samples,
            tiers: &self.tiers,
            plan: &self.plan,
            orders: &self.orders,
        }
    }

    pub fn pack(&self, dir: &Path) -> DiskLayout {
        batched_pack(self.input(), dir, 1 << 20).unwrap().0
    }
}

/// 200-node skewed workload with seed-dependent tiers, `s`, `m` and `k`.
pub fn random_case(dir: &Path, seed: u64, num_batches: usize) -> Case {
    let params = WorkloadParams {
        num_nodes: 200,
        avg_degree: 4 + (seed % 4) as usize,
        skew: 0.6 + 0.1 * (seed % 5) as f64,
        dim: [4, 8, 16][seed as usize % 3],
        page_size: 256,
        batch_size: 5,
        fanout: vec![3, 2],
        num_batches: Some(num_batches),
        seed,
    };
    let w = generate_workload(dir, &params).unwrap();
    let freq = count_frequencies(&w.samples, 200).unwrap();
    let tiers = assign_memory_tiers(&freq, seed % 7, 2 * (seed % 5));
    let s = 1 + (seed % 6) as u32;
    let m = 1 + (seed % 3) as u32;
    let plan = build_disk_plan(&w.samples, &tiers, s, m).unwrap();
    let reorderer = Reorderer::MinHash {
        k: 1 + (seed % 4) as u32,
        rng_seed: seed,
    };
    let orders = reorderer.apply(&plan, &w.samples).unwrap();
    Case {
        features: w.features,
        samples: w.samples,
        tiers,
        plan,
        orders,
    }
}
