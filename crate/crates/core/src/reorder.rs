//! MinHash reordering of a segment's disk-cache entries.
//!
//! Every cached node is modelled by the set of batches (local to its segment)
//! that need it. Each of `k` random permutations of the local batch indices
//! acts as a hash function; a node's signature is the smallest permuted index
//! over all its batches and all permutations. Sorting by signature places
//! nodes that share batches next to each other, so a batch touches fewer
//! disk pages.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::planner::{DiskPlan, SegmentPlan};
use crate::workload::{derive_seed, SampleSet};
use crate::NodeId;

pub const DEFAULT_NUM_HASHES: u32 = 4;

/// Disk order of one segment's cache file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheOrder {
    pub segment_id: u32,
    nodes: Vec<NodeId>,
    positions: HashMap<NodeId, u32>,
}

impl CacheOrder {
    pub fn new(segment_id: u32, nodes: Vec<NodeId>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(nodes.len());
        for (i, &v) in nodes.iter().enumerate() {
            if positions.insert(v, i as u32).is_some() {
                return Err(Error::invalid(format!(
                    "segment {segment_id}: node {v} appears twice in cache order"
                )));
            }
        }
        Ok(Self {
            segment_id,
            nodes,
            positions,
        })
    }

    /// The segment's cache nodes in ascending ID order.
    pub fn identity(segment: &SegmentPlan) -> Self {
        Self::new(segment.segment_id, segment.cache_nodes.clone())
            .expect("cache nodes are distinct")
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, v: NodeId) -> Option<u32> {
        self.positions.get(&v).copied()
    }

    /// `(page, slot)` of node `v` when the order is laid out `fpp` rows per page.
    pub fn locate(&self, v: NodeId, fpp: u32) -> Option<(u32, u32)> {
        self.position(v).map(|p| (p / fpp, p % fpp))
    }

    pub fn num_pages(&self, fpp: u32) -> u64 {
        (self.nodes.len() as u64).div_ceil(u64::from(fpp))
    }
}

/// Hash functions and signatures of one segment.
#[derive(Debug, Clone)]
pub struct MinHashState {
    pub k: u32,
    /// `permutations[j][i]` is the hashed value (in `1..=n_seg`) of local batch `i`.
    pub permutations: Vec<Vec<u32>>,
    /// Signature per cache node, parallel to the segment's `cache_nodes`.
    pub signatures: Vec<u32>,
}

impl MinHashState {
    pub fn compute(
        segment: &SegmentPlan,
        samples: &SampleSet,
        k: u32,
        rng_seed: u64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("number of hash functions must be at least 1"));
        }
        let n_seg = segment.batch_ids.len();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
            rng_seed,
            u64::from(segment.segment_id),
        ]));
        let permutations: Vec<Vec<u32>> = (0..k)
            .map(|_| {
                let mut p: Vec<u32> = (1..=n_seg as u32).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();

        let index: HashMap<NodeId, usize> = segment
            .cache_nodes
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        let mut signatures = vec![u32::MAX; segment.cache_nodes.len()];
        for (i, &b) in segment.batch_ids.iter().enumerate() {
            let batch = samples.batches.get(b as usize).ok_or_else(|| {
                Error::inconsistent(format!("segment refers to missing batch {b}"))
            })?;
            // V_in = V_i ∩ V_d
            for v in &batch.nodes {
                if let Some(&slot) = index.get(v) {
                    for h in &permutations {
                        signatures[slot] = signatures[slot].min(h[i]);
                    }
                }
            }
        }
        Ok(Self {
            k,
            permutations,
            signatures,
        })
    }

    /// Stable sort of the cache nodes by `(signature, node id)`.
    pub fn order(&self, segment: &SegmentPlan) -> CacheOrder {
        let mut keyed: Vec<(u32, NodeId)> = self
            .signatures
            .iter()
            .copied()
            .zip(segment.cache_nodes.iter().copied())
            .collect();
        keyed.sort_unstable();
        CacheOrder::new(segment.segment_id, keyed.into_iter().map(|(_, v)| v).collect())
            .expect("cache nodes are distinct")
    }
}

pub fn minhash_reorder(
    segment: &SegmentPlan,
    samples: &SampleSet,
    k: u32,
    rng_seed: u64,
) -> Result<CacheOrder> {
    if segment.cache_nodes.is_empty() {
        return Ok(CacheOrder::identity(segment));
    }
    Ok(MinHashState::compute(segment, samples, k, rng_seed)?.order(segment))
}

/// Distinct pages covering `required` under `order`.
pub fn pages_for_batch(order: &CacheOrder, required: &[NodeId], fpp: u32) -> Result<u64> {
    let mut pages = HashSet::new();
    for &v in required {
        let pos = order.position(v).ok_or_else(|| {
            Error::invalid(format!(
                "node {v} is not in the cache of segment {}",
                order.segment_id
            ))
        })?;
        pages.insert(pos / fpp);
    }
    Ok(pages.len() as u64)
}

/// How cache files of a plan are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reorderer {
    Identity,
    MinHash { k: u32, rng_seed: u64 },
}

impl Reorderer {
    /// One order per segment, reordered independently in parallel.
    pub fn apply(&self, plan: &DiskPlan, samples: &SampleSet) -> Result<Vec<CacheOrder>> {
        match *self {
            Reorderer::Identity => Ok(plan.segments.iter().map(CacheOrder::identity).collect()),
            Reorderer::MinHash { k, rng_seed } => plan
                .segments
                .par_iter()
                .map(|seg| minhash_reorder(seg, samples, k, rng_seed))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{build_disk_plan, MemoryTierPlan};
    use crate::workload::GraphSample;
    use proptest::prelude::*;

    fn batch(id: u64, nodes: Vec<NodeId>) -> GraphSample {
        GraphSample {
            batch_id: id,
            num_seeds: 1.min(nodes.len() as u32),
            nodes,
            hops: vec![vec![]],
        }
    }

    fn samples(batches: Vec<Vec<NodeId>>) -> SampleSet {
        SampleSet {
            fanout: vec![0],
            batch_size: 1,
            rng_seed: 0,
            batches: batches
                .into_iter()
                .enumerate()
                .map(|(i, n)| batch(i as u64, n))
                .collect(),
        }
    }

    fn segment(cache: Vec<NodeId>, n_batches: usize) -> SegmentPlan {
        SegmentPlan {
            segment_id: 0,
            batch_ids: (0..n_batches as u64).collect(),
            cache_nodes: cache,
            packed: vec![vec![]; n_batches],
            cached_required: vec![vec![]; n_batches],
        }
    }

    #[test]
    fn page_counts_for_interleaved_batch() {
        let identity = CacheOrder::new(0, (0..8).collect()).unwrap();
        assert_eq!(pages_for_batch(&identity, &[0, 2, 4, 6], 2).unwrap(), 4);
        let grouped = CacheOrder::new(0, vec![0, 2, 4, 6, 1, 3, 5, 7]).unwrap();
        assert_eq!(pages_for_batch(&grouped, &[0, 2, 4, 6], 2).unwrap(), 2);
        assert_eq!(pages_for_batch(&grouped, &[], 2).unwrap(), 0);
        assert!(pages_for_batch(&grouped, &[9], 2).is_err());
    }

    #[test]
    fn disjoint_batches_are_grouped() {
        let s = samples(vec![vec![0, 2, 4, 6], vec![1, 3, 5, 7]]);
        let seg = segment((0..8).collect(), 2);
        let ident = CacheOrder::identity(&seg);
        assert_eq!(pages_for_batch(&ident, &[0, 2, 4, 6], 2).unwrap(), 4);
        for seed in 0..8 {
            let order = minhash_reorder(&seg, &s, 1, seed).unwrap();
            assert_eq!(pages_for_batch(&order, &[0, 2, 4, 6], 2).unwrap(), 2);
            assert_eq!(pages_for_batch(&order, &[1, 3, 5, 7], 2).unwrap(), 2);
        }
        // With k > 1 both groups can reach the same minimum; each group still
        // shares one signature, and the groups separate whenever those differ.
        for k in [2, 3, 8] {
            for seed in 0..8 {
                let state = MinHashState::compute(&seg, &s, k, seed).unwrap();
                let g0 = state.signatures[0];
                let g1 = state.signatures[1];
                assert!([0, 2, 4, 6].iter().all(|&i| state.signatures[i] == g0));
                assert!([1, 3, 5, 7].iter().all(|&i| state.signatures[i] == g1));
                let order = state.order(&seg);
                let pages = pages_for_batch(&order, &[0, 2, 4, 6], 2).unwrap();
                assert_eq!(pages, if g0 == g1 { 4 } else { 2 });
            }
        }
    }

    /// Total cache pages over 20 reorder seeds on a fixed random 3-batch fixture.
    fn three_batch_pages(k: u32) -> u64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let lists: Vec<Vec<NodeId>> = (0..3)
            .map(|_| (0..32).filter(|_| rng.random_bool(0.5)).collect())
            .collect();
        let s = samples(lists);
        let plan = build_disk_plan(&s, &MemoryTierPlan::empty(), 3, 1).unwrap();
        let seg = &plan.segments[0];
        (0..20)
            .map(|seed| {
                let order = minhash_reorder(seg, &s, k, seed).unwrap();
                seg.cached_required
                    .iter()
                    .map(|req| pages_for_batch(&order, req, 2).unwrap())
                    .sum::<u64>()
            })
            .sum()
    }

    #[test]
    fn more_hashes_on_three_batches() {
        // Frozen measurement. A single min over more permutations collapses
        // toward 1, so extra hashes add ties rather than resolution here.
        assert_eq!((three_batch_pages(1), three_batch_pages(8)), (425, 460));
    }

    #[test]
    fn single_batch_keeps_id_order() {
        let s = samples(vec![vec![9, 3, 5, 1, 7]]);
        let seg = segment(vec![1, 3, 5, 7, 9], 1);
        let order = minhash_reorder(&seg, &s, 4, 17).unwrap();
        assert_eq!(order.nodes(), &[1, 3, 5, 7, 9]);
        assert_eq!(order.num_pages(2), 3);
    }

    #[test]
    fn empty_cache_gives_empty_order() {
        let s = samples(vec![vec![1]]);
        let order = minhash_reorder(&segment(vec![], 1), &s, 4, 0).unwrap();
        assert!(order.is_empty());
        assert!(minhash_reorder(&segment(vec![1], 1), &s, 0, 0).is_err());
    }

    #[test]
    fn permutations_are_bijections_and_deterministic() {
        let s = samples(vec![vec![1, 2], vec![2, 3], vec![3, 1], vec![1]]);
        let seg = segment(vec![1, 2, 3], 4);
        let a = MinHashState::compute(&seg, &s, 6, 5).unwrap();
        let b = MinHashState::compute(&seg, &s, 6, 5).unwrap();
        assert_eq!(a.permutations, b.permutations);
        for p in &a.permutations {
            let mut q = p.clone();
            q.sort_unstable();
            assert_eq!(q, vec![1, 2, 3, 4]);
        }
        assert_eq!(a.order(&seg), b.order(&seg));
    }

    /// Recomputes every signature from its definition: the minimum of
    /// `H_j(i)` over batches `i` containing the node and all `j`.
    fn brute_signatures(state: &MinHashState, seg: &SegmentPlan, s: &SampleSet) -> Vec<u32> {
        seg.cache_nodes
            .iter()
            .map(|v| {
                let mut best = u32::MAX;
                for (i, &b) in seg.batch_ids.iter().enumerate() {
                    if s.batches[b as usize].nodes.contains(v) {
                        for h in &state.permutations {
                            best = best.min(h[i]);
                        }
                    }
                }
                best
            })
            .collect()
    }

    fn arb_fixture() -> impl Strategy<Value = (Vec<Vec<NodeId>>, u32, u64)> {
        (1usize..8, 1u32..9, any::<u64>()).prop_flat_map(|(nb, k, seed)| {
            (
                proptest::collection::vec(
                    proptest::collection::btree_set(0u32..64, 0..20)
                        .prop_map(|s| s.into_iter().collect::<Vec<_>>()),
                    nb,
                ),
                Just(k),
                Just(seed),
            )
        })
    }

    proptest! {
        #[test]
        fn streaming_signatures_match_definition((batches, k, seed) in arb_fixture()) {
            let s = samples(batches);
            let tiers = MemoryTierPlan::empty();
            let plan = build_disk_plan(&s, &tiers, s.len() as u32, 1).unwrap();
            let seg = &plan.segments[0];
            let state = MinHashState::compute(seg, &s, k, seed).unwrap();
            prop_assert_eq!(&state.signatures, &brute_signatures(&state, seg, &s));
            prop_assert!(state.signatures.iter().all(|&x| x != u32::MAX));

            let order = state.order(seg);
            let mut sorted = order.nodes().to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(&sorted, &seg.cache_nodes);
        }

        #[test]
        fn identical_membership_is_contiguous((batches, k, seed) in arb_fixture()) {
            let s = samples(batches);
            let plan = build_disk_plan(&s, &MemoryTierPlan::empty(), s.len() as u32, 1).unwrap();
            let seg = &plan.segments[0];
            let state = MinHashState::compute(seg, &s, k, seed).unwrap();
            let order = state.order(seg);
            let sig: HashMap<NodeId, u32> = seg.cache_nodes.iter().copied()
                .zip(state.signatures.iter().copied()).collect();
            let membership = |v: NodeId| -> Vec<usize> {
                (0..s.len()).filter(|&i| s.batches[i].nodes.contains(&v)).collect()
            };
            let nodes = order.nodes();
            for a in 0..nodes.len() {
                for b in a + 1..nodes.len() {
                    if membership(nodes[a]) == membership(nodes[b]) {
                        // Anything between them can only be an equal-signature ID tie.
                        let s_ab = sig[&nodes[a]];
                        prop_assert_eq!(s_ab, sig[&nodes[b]]);
                        prop_assert!(nodes[a..=b].iter().all(|v| sig[v] == s_ab));
                    }
                }
            }
        }
    }
}
