use serde::{Deserialize, Serialize};

use super::DiskPlan;
use crate::error::{Error, Result};
use crate::reorder::{pages_for_batch, CacheOrder};
use crate::workload::PageGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCost {
    pub batch_id: u64,
    /// `ceil(|P_i| / fpp)`
    pub packed_pages: u64,
    /// Distinct cache pages covering `D_i` under the segment's order.
    pub cache_pages: u64,
}

impl BatchCost {
    pub fn total(&self) -> u64 {
        self.packed_pages + self.cache_pages
    }
}

/// Predicted feature-page reads of one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoCost {
    pub per_batch: Vec<BatchCost>,
    pub total_pages: u64,
    pub total_bytes: u64,
}

impl IoCost {
    pub fn packed_pages(&self) -> u64 {
        self.per_batch.iter().map(|b| b.packed_pages).sum()
    }

    pub fn cache_pages(&self) -> u64 {
        self.per_batch.iter().map(|b| b.cache_pages).sum()
    }
}

/// The I/O objective: packed pages plus distinct cache pages, per batch.
/// `orders` holds one cache order per segment, in segment order.
pub fn io_cost(plan: &DiskPlan, orders: &[CacheOrder], geometry: PageGeometry) -> Result<IoCost> {
    if orders.len() != plan.segments.len() {
        return Err(Error::invalid(format!(
            "{} cache orders for {} segments",
            orders.len(),
            plan.segments.len()
        )));
    }
    let fpp = geometry.fpp();
    let mut per_batch = Vec::with_capacity(plan.num_batches());
    for (seg, order) in plan.segments.iter().zip(orders) {
        if order.segment_id != seg.segment_id || order.len() != seg.cache_nodes.len() {
            return Err(Error::invalid(format!(
                "cache order for segment {} does not match plan segment {}",
                order.segment_id, seg.segment_id
            )));
        }
        for (local, &batch_id) in seg.batch_ids.iter().enumerate() {
            per_batch.push(BatchCost {
                batch_id,
                packed_pages: geometry.pages_for(seg.packed[local].len() as u64),
                cache_pages: pages_for_batch(order, &seg.cached_required[local], fpp)?,
            });
        }
    }
    let total_pages = per_batch.iter().map(BatchCost::total).sum::<u64>();
    Ok(IoCost {
        per_batch,
        total_pages,
        total_bytes: total_pages * u64::from(geometry.page_size),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{build_disk_plan, MemoryTierPlan, SegmentPlan};
    use crate::workload::{GraphSample, SampleSet};

    const FPP2: PageGeometry = PageGeometry {
        page_size: 4096,
        row_bytes: 2048,
    };

    fn one_segment(cache: Vec<u32>, required: Vec<u32>, packed: Vec<u32>) -> DiskPlan {
        DiskPlan {
            segment_size: 1,
            threshold: 1,
            space_budget: None,
            segments: vec![SegmentPlan {
                segment_id: 0,
                batch_ids: vec![0],
                cache_nodes: cache,
                packed: vec![packed],
                cached_required: vec![required],
            }],
        }
    }

    #[test]
    fn interleaved_cache_reads() {
        let plan = one_segment((0..8).collect(), vec![0, 2, 4, 6], vec![]);
        let identity = vec![CacheOrder::identity(&plan.segments[0])];
        let c = io_cost(&plan, &identity, FPP2).unwrap();
        assert_eq!(c.total_pages, 4);
        assert_eq!(c.total_bytes, 4 * 4096);

        let grouped = vec![CacheOrder::new(0, vec![0, 2, 4, 6, 1, 3, 5, 7]).unwrap()];
        assert_eq!(io_cost(&plan, &grouped, FPP2).unwrap().total_pages, 2);
    }

    #[test]
    fn empty_batch_costs_nothing() {
        let plan = one_segment(vec![], vec![], vec![]);
        let c = io_cost(&plan, &[CacheOrder::identity(&plan.segments[0])], FPP2).unwrap();
        assert_eq!(c.total_pages, 0);
    }

    #[test]
    fn packed_pages_round_up_and_totals_add() {
        let samples = SampleSet {
            fanout: vec![0],
            batch_size: 1,
            rng_seed: 0,
            batches: vec![
                GraphSample { batch_id: 0, num_seeds: 0, nodes: vec![0, 1, 2, 9], hops: vec![vec![]] },
                GraphSample { batch_id: 1, num_seeds: 0, nodes: vec![3, 9], hops: vec![vec![]] },
            ],
        };
        let plan = build_disk_plan(&samples, &MemoryTierPlan::empty(), 2, 1).unwrap();
        let orders: Vec<_> = plan.segments.iter().map(CacheOrder::identity).collect();
        let c = io_cost(&plan, &orders, FPP2).unwrap();
        assert_eq!(c.per_batch[0], BatchCost { batch_id: 0, packed_pages: 2, cache_pages: 1 });
        assert_eq!(c.per_batch[1], BatchCost { batch_id: 1, packed_pages: 1, cache_pages: 1 });
        assert_eq!(c.total_pages, c.packed_pages() + c.cache_pages());
        assert!(io_cost(&plan, &[], FPP2).is_err());
    }
}
