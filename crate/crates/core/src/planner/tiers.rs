use serde::{Deserialize, Serialize};

use super::FrequencyTable;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    /// Most popular features (the accelerator-resident cache).
    Fast,
    /// Second most popular features (host memory).
    Host,
}

/// Static placement of the most popular features in the two memory tiers.
/// Node lists are kept in ascending ID order, which is also their file order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryTierPlan {
    pub fast_capacity: u64,
    pub host_capacity: u64,
    pub fast_nodes: Vec<NodeId>,
    pub host_nodes: Vec<NodeId>,
}

impl MemoryTierPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tier_of(&self, v: NodeId) -> Option<Tier> {
        if self.fast_nodes.binary_search(&v).is_ok() {
            Some(Tier::Fast)
        } else if self.host_nodes.binary_search(&v).is_ok() {
            Some(Tier::Host)
        } else {
            None
        }
    }

    pub fn is_cached(&self, v: NodeId) -> bool {
        self.tier_of(v).is_some()
    }

    /// Slot of `v` inside its tier file.
    pub fn slot_of(&self, v: NodeId) -> Option<(Tier, u32)> {
        if let Ok(i) = self.fast_nodes.binary_search(&v) {
            Some((Tier::Fast, i as u32))
        } else {
            self.host_nodes
                .binary_search(&v)
                .ok()
                .map(|i| (Tier::Host, i as u32))
        }
    }

    pub fn nodes(&self, tier: Tier) -> &[NodeId] {
        match tier {
            Tier::Fast => &self.fast_nodes,
            Tier::Host => &self.host_nodes,
        }
    }

    /// Dense membership mask over `num_nodes` ids.
    pub fn cached_mask(&self, num_nodes: usize) -> Vec<bool> {
        let mut mask = vec![false; num_nodes];
        for &v in self.fast_nodes.iter().chain(&self.host_nodes) {
            if let Some(m) = mask.get_mut(v as usize) {
                *m = true;
            }
        }
        mask
    }
}

/// Ranks nodes by `(count desc, id asc)`; the first `fast_capacity` go to the
/// fast tier and the next `host_capacity` to the host tier. Nodes no batch
/// touches are never cached.
pub fn assign_memory_tiers(
    freq: &FrequencyTable,
    fast_capacity: u64,
    host_capacity: u64,
) -> MemoryTierPlan {
    let mut ranked: Vec<(u64, NodeId)> = freq
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(v, &c)| (c, v as NodeId))
        .collect();
    ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let fast_end = (fast_capacity as usize).min(ranked.len());
    let host_end = fast_end.saturating_add(host_capacity as usize).min(ranked.len());
    let mut fast_nodes: Vec<NodeId> = ranked[..fast_end].iter().map(|&(_, v)| v).collect();
    let mut host_nodes: Vec<NodeId> = ranked[fast_end..host_end].iter().map(|&(_, v)| v).collect();
    fast_nodes.sort_unstable();
    host_nodes.sort_unstable();
    MemoryTierPlan {
        fast_capacity,
        host_capacity,
        fast_nodes,
        host_nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(counts: Vec<u64>) -> FrequencyTable {
        let total = counts.iter().sum();
        FrequencyTable {
            counts,
            total_accesses: total,
        }
    }

    #[test]
    fn no_memory_caches_nothing() {
        let t = assign_memory_tiers(&table(vec![3, 1, 2]), 0, 0);
        assert!(t.fast_nodes.is_empty() && t.host_nodes.is_empty());
    }

    #[test]
    fn large_capacity_caches_every_accessed_node() {
        let t = assign_memory_tiers(&table(vec![3, 0, 2, 1]), 2, 100);
        assert_eq!(t.fast_nodes, vec![0, 2]);
        assert_eq!(t.host_nodes, vec![3]);
        assert!(!t.is_cached(1));
    }

    #[test]
    fn feature_assembly_example_tiers() {
        // Popularity ranks {7, 4} above {1, 9} above everything else.
        let mut counts = vec![1u64; 12];
        counts[7] = 9;
        counts[4] = 8;
        counts[1] = 5;
        counts[9] = 5;
        let t = assign_memory_tiers(&table(counts), 2, 2);
        assert_eq!(t.fast_nodes, vec![4, 7]);
        assert_eq!(t.host_nodes, vec![1, 9]);
        assert_eq!(t.slot_of(9), Some((Tier::Host, 1)));
        assert_eq!(t.tier_of(7), Some(Tier::Fast));
    }

    #[test]
    fn ties_break_by_node_id() {
        let t = assign_memory_tiers(&table(vec![2, 2, 2, 2]), 1, 2);
        assert_eq!(t.fast_nodes, vec![0]);
        assert_eq!(t.host_nodes, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn tiers_respect_popularity(counts in proptest::collection::vec(0u64..6, 0..60),
                                    fast in 0u64..10, host in 0u64..10) {
            let f = table(counts.clone());
            let t = assign_memory_tiers(&f, fast, host);
            prop_assert!(t.fast_nodes.len() as u64 <= fast);
            prop_assert!(t.host_nodes.len() as u64 <= host);
            prop_assert!(t.fast_nodes.iter().all(|v| !t.host_nodes.contains(v)));
            let key = |v: NodeId| (std::cmp::Reverse(counts[v as usize]), v);
            let uncached: Vec<NodeId> = (0..counts.len() as NodeId).filter(|&v| !t.is_cached(v)).collect();
            for &a in &t.fast_nodes {
                prop_assert!(counts[a as usize] > 0);
                for &b in t.host_nodes.iter().chain(&uncached) {
                    prop_assert!(key(a) < key(b));
                }
            }
            for &a in &t.host_nodes {
                prop_assert!(counts[a as usize] > 0);
                for &b in &uncached {
                    prop_assert!(key(a) < key(b));
                }
            }
        }
    }
}
