use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::MemoryTierPlan;
use crate::error::{Error, Result};
use crate::workload::{PageGeometry, SampleSet};
use crate::NodeId;

/// One segment: `s` consecutive batches sharing a de-duplicated disk cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub segment_id: u32,
    pub batch_ids: Vec<u64>,
    /// Disk-resident nodes whose local frequency exceeds the threshold, ascending.
    pub cache_nodes: Vec<NodeId>,
    /// Per local batch: disk-resident nodes packed into the batch's chunk, ascending.
    pub packed: Vec<Vec<NodeId>>,
    /// Per local batch: the batch's nodes found in `cache_nodes`, ascending.
    pub cached_required: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiskPlan {
    pub segment_size: u32,
    pub threshold: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_budget: Option<u64>,
    pub segments: Vec<SegmentPlan>,
}

impl DiskPlan {
    pub fn num_batches(&self) -> usize {
        self.segments.iter().map(|s| s.batch_ids.len()).sum()
    }

    /// Segment and local index owning `batch_id`.
    pub fn locate_batch(&self, batch_id: u64) -> Option<(&SegmentPlan, usize)> {
        let seg = self
            .segments
            .get((batch_id / u64::from(self.segment_size.max(1))) as usize)?;
        let local = seg.batch_ids.iter().position(|&b| b == batch_id)?;
        Some((seg, local))
    }

    pub fn total_cache_nodes(&self) -> usize {
        self.segments.iter().map(|s| s.cache_nodes.len()).sum()
    }

    pub fn total_packed_nodes(&self) -> usize {
        self.segments
            .iter()
            .flat_map(|s| s.packed.iter())
            .map(Vec::len)
            .sum()
    }

    /// Every node a batch requires must live in exactly one of: a memory tier,
    /// the segment's cache, or the batch's packed list.
    pub fn check_coverage(&self, samples: &SampleSet, tiers: &MemoryTierPlan) -> Result<()> {
        if self.num_batches() != samples.len() {
            return Err(Error::inconsistent(format!(
                "plan covers {} batches, sample set has {}",
                self.num_batches(),
                samples.len()
            )));
        }
        for b in &samples.batches {
            let (seg, local) = self.locate_batch(b.batch_id).ok_or_else(|| {
                Error::inconsistent(format!("batch {} missing from plan", b.batch_id))
            })?;
            let cache: HashSet<NodeId> = seg.cache_nodes.iter().copied().collect();
            let packed: HashSet<NodeId> = seg.packed[local].iter().copied().collect();
            let cached: HashSet<NodeId> = seg.cached_required[local].iter().copied().collect();
            for &v in &b.nodes {
                let places = usize::from(tiers.is_cached(v))
                    + usize::from(packed.contains(&v))
                    + usize::from(cached.contains(&v));
                if places != 1 || (cached.contains(&v) && !cache.contains(&v)) {
                    return Err(Error::inconsistent(format!(
                        "batch {}: node {v} resolved to {places} locations",
                        b.batch_id
                    )));
                }
            }
            let required = packed.len() + cached.len();
            let disk_resident = b.nodes.iter().filter(|&&v| !tiers.is_cached(v)).count();
            if required != disk_resident {
                return Err(Error::inconsistent(format!(
                    "batch {}: plan lists {required} disk nodes, batch needs {disk_resident}",
                    b.batch_id
                )));
            }
        }
        for seg in &self.segments {
            if let Some(v) = seg.cache_nodes.iter().find(|&&v| tiers.is_cached(v)) {
                return Err(Error::inconsistent(format!(
                    "segment {}: memory-cached node {v} also in disk cache",
                    seg.segment_id
                )));
            }
        }
        Ok(())
    }
}

fn cached_mask(samples: &SampleSet, tiers: &MemoryTierPlan) -> Vec<bool> {
    let max = samples
        .batches
        .iter()
        .flat_map(|b| b.nodes.iter())
        .copied()
        .max()
        .map_or(0, |v| v as usize + 1);
    tiers.cached_mask(max)
}

fn check_params(s: u32, m: u32) -> Result<()> {
    if s == 0 {
        return Err(Error::invalid("segment size must be at least 1"));
    }
    if m == 0 {
        return Err(Error::invalid("threshold must be at least 1"));
    }
    Ok(())
}

/// Local frequency of each disk-resident node over one segment's batches.
fn local_counts(samples: &SampleSet, batches: &[u64], mask: &[bool]) -> HashMap<NodeId, u32> {
    let mut counts = HashMap::new();
    for &b in batches {
        for &v in &samples.batches[b as usize].nodes {
            if !mask[v as usize] {
                *counts.entry(v).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Groups batches into segments of `s` and splits each segment's
/// disk-resident nodes: local frequency `> m` goes to the shared cache,
/// `<= m` is packed into every batch that needs it.
pub fn build_disk_plan(
    samples: &SampleSet,
    tiers: &MemoryTierPlan,
    s: u32,
    m: u32,
) -> Result<DiskPlan> {
    check_params(s, m)?;
    let mask = cached_mask(samples, tiers);
    let ids: Vec<u64> = (0..samples.len() as u64).collect();
    let segments = ids
        .chunks(s as usize)
        .enumerate()
        .map(|(seg_id, batch_ids)| {
            let counts = local_counts(samples, batch_ids, &mask);
            let mut cache_nodes: Vec<NodeId> = counts
                .iter()
                .filter(|(_, &c)| c > m)
                .map(|(&v, _)| v)
                .collect();
            cache_nodes.sort_unstable();
            let mut packed = Vec::with_capacity(batch_ids.len());
            let mut cached_required = Vec::with_capacity(batch_ids.len());
            for &b in batch_ids {
                let mut p = Vec::new();
                let mut d = Vec::new();
                for &v in &samples.batches[b as usize].nodes {
                    if mask[v as usize] {
                        continue;
                    }
                    if counts[&v] > m {
                        d.push(v);
                    } else {
                        p.push(v);
                    }
                }
                p.sort_unstable();
                d.sort_unstable();
                packed.push(p);
                cached_required.push(d);
            }
            SegmentPlan {
                segment_id: seg_id as u32,
                batch_ids: batch_ids.to_vec(),
                cache_nodes,
                packed,
                cached_required,
            }
        })
        .collect();
    Ok(DiskPlan {
        segment_size: s,
        threshold: m,
        space_budget: None,
        segments,
    })
}

/// Page-aligned bytes of all segment caches plus all packed chunks.
pub fn space_usage(plan: &DiskPlan, geometry: PageGeometry) -> u64 {
    plan.segments
        .iter()
        .map(|seg| {
            geometry.bytes_for(seg.cache_nodes.len() as u64)
                + seg
                    .packed
                    .iter()
                    .map(|p| geometry.bytes_for(p.len() as u64))
                    .sum::<u64>()
        })
        .sum()
}

/// Same value as `space_usage(build_disk_plan(..))`, by counting alone.
pub fn space_for(
    samples: &SampleSet,
    tiers: &MemoryTierPlan,
    s: u32,
    m: u32,
    geometry: PageGeometry,
) -> Result<u64> {
    check_params(s, m)?;
    let mask = cached_mask(samples, tiers);
    let ids: Vec<u64> = (0..samples.len() as u64).collect();
    let mut total = 0;
    for batch_ids in ids.chunks(s as usize) {
        let counts = local_counts(samples, batch_ids, &mask);
        let cached = counts.values().filter(|&&c| c > m).count() as u64;
        total += geometry.bytes_for(cached);
        for &b in batch_ids {
            let packed = samples.batches[b as usize]
                .nodes
                .iter()
                .filter(|&&v| !mask[v as usize] && counts[&v] <= m)
                .count() as u64;
            total += geometry.bytes_for(packed);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::GraphSample;
    use proptest::prelude::*;

    pub(crate) fn set(batches: Vec<Vec<NodeId>>) -> SampleSet {
        SampleSet {
            fanout: vec![0],
            batch_size: 1,
            rng_seed: 0,
            batches: batches
                .into_iter()
                .enumerate()
                .map(|(i, nodes)| GraphSample {
                    batch_id: i as u64,
                    num_seeds: 0,
                    nodes,
                    hops: vec![vec![]],
                })
                .collect(),
        }
    }

    const GEOM: PageGeometry = PageGeometry {
        page_size: 4096,
        row_bytes: 2048,
    };

    #[test]
    fn segments_group_consecutive_batches() {
        let s = set(vec![vec![0], vec![1], vec![2], vec![3]]);
        let p = build_disk_plan(&s, &MemoryTierPlan::empty(), 2, 1).unwrap();
        let groups: Vec<Vec<u64>> = p.segments.iter().map(|g| g.batch_ids.clone()).collect();
        assert_eq!(groups, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(p.locate_batch(3).unwrap().1, 1);
    }

    #[test]
    fn threshold_at_least_segment_size_packs_everything() {
        let s = set(vec![vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4]]);
        for m in 3..6 {
            let p = build_disk_plan(&s, &MemoryTierPlan::empty(), 3, m).unwrap();
            assert!(p.segments.iter().all(|g| g.cache_nodes.is_empty()));
            assert_eq!(p.total_packed_nodes(), 9);
        }
    }

    #[test]
    fn shared_node_goes_to_cache() {
        let s = set(vec![vec![5, 1], vec![5, 2]]);
        let p = build_disk_plan(&s, &MemoryTierPlan::empty(), 2, 1).unwrap();
        let seg = &p.segments[0];
        assert_eq!(seg.cache_nodes, vec![5]);
        assert!(seg.packed.iter().all(|l| !l.contains(&5)));
        assert_eq!(seg.cached_required, vec![vec![5], vec![5]]);
    }

    #[test]
    fn memory_nodes_never_reach_disk() {
        let s = set(vec![vec![0, 1, 2], vec![0, 1, 3]]);
        let tiers = MemoryTierPlan {
            fast_capacity: 1,
            host_capacity: 1,
            fast_nodes: vec![0],
            host_nodes: vec![1],
        };
        let p = build_disk_plan(&s, &tiers, 2, 1).unwrap();
        p.check_coverage(&s, &tiers).unwrap();
        assert!(p.segments[0].cache_nodes.is_empty());
        assert_eq!(p.segments[0].packed, vec![vec![2], vec![3]]);
    }

    #[test]
    fn space_examples() {
        let s = set(vec![vec![0, 1]]);
        let all = MemoryTierPlan {
            fast_capacity: 2,
            host_capacity: 0,
            fast_nodes: vec![0, 1],
            host_nodes: vec![],
        };
        let p = build_disk_plan(&s, &all, 1, 1).unwrap();
        assert_eq!(space_usage(&p, GEOM), 0);

        let s = set(vec![vec![0, 1, 2], vec![0, 1, 2]]);
        let p = build_disk_plan(&s, &MemoryTierPlan::empty(), 2, 1).unwrap();
        assert_eq!(p.segments[0].cache_nodes.len(), 3);
        assert_eq!(space_usage(&p, GEOM), 2 * 4096);
    }

    #[test]
    fn rejects_zero_parameters() {
        let s = set(vec![vec![0]]);
        assert!(build_disk_plan(&s, &MemoryTierPlan::empty(), 0, 1).is_err());
        assert!(build_disk_plan(&s, &MemoryTierPlan::empty(), 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn coverage_and_counted_space(
            batches in proptest::collection::vec(
                proptest::collection::btree_set(0u32..40, 0..15).prop_map(|s| s.into_iter().collect::<Vec<_>>()),
                0..12),
            s in 1u32..6, m in 1u32..4, fast in 0usize..4, host in 0usize..4,
        ) {
            let samples = set(batches);
            let freq = super::super::count_frequencies(&samples, 40).unwrap();
            let tiers = super::super::assign_memory_tiers(&freq, fast as u64, host as u64);
            let plan = build_disk_plan(&samples, &tiers, s, m).unwrap();
            plan.check_coverage(&samples, &tiers).unwrap();
            let geom = PageGeometry { page_size: 64, row_bytes: 24 };
            prop_assert_eq!(space_usage(&plan, geom), space_for(&samples, &tiers, s, m, geom).unwrap());
        }
    }
}
