use rayon::prelude::*;

use super::{build_disk_plan, io_cost, space_for, space_usage, DiskPlan, IoCost, MemoryTierPlan};
use crate::error::{Error, Result};
use crate::reorder::{CacheOrder, Reorderer};
use crate::workload::{PageGeometry, SampleSet};

#[derive(Debug, Clone)]
pub struct HeuristicOutcome {
    pub plan: DiskPlan,
    pub space: u64,
    /// `(s, space)` pairs evaluated, in probe order.
    pub probes: Vec<(u32, u64)>,
    /// Set when the probes contradicted monotonicity and a linear scan ran.
    pub linear_fallback: bool,
}

/// Fixes `m = 1` and finds the smallest segment size whose plan fits
/// `budget`, only counting features (no reordering).
///
/// Space is assumed non-increasing in `s` and bisected; if any two probes
/// contradict that, the search falls back to scanning `s = 1..=n`.
pub fn heuristic_search(
    samples: &SampleSet,
    tiers: &MemoryTierPlan,
    budget: u64,
    geometry: PageGeometry,
) -> Result<HeuristicOutcome> {
    if budget == 0 {
        return Err(Error::invalid("disk space budget must be positive"));
    }
    const M: u32 = 1;
    let n = (samples.len() as u32).max(1);
    let mut probes = Vec::new();
    let probe = |s: u32, probes: &mut Vec<(u32, u64)>| -> Result<u64> {
        let space = space_for(samples, tiers, s, M, geometry)?;
        probes.push((s, space));
        Ok(space)
    };

    let at_n = probe(n, &mut probes)?;
    if at_n > budget {
        return Err(Error::Infeasible {
            min_space: at_n,
            budget,
        });
    }
    let mut best = n;
    if n > 1 {
        if probe(1, &mut probes)? <= budget {
            best = 1;
        } else {
            // invariant: space(lo) > budget >= space(hi)
            let (mut lo, mut hi) = (1u32, n);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if probe(mid, &mut probes)? <= budget {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            best = hi;
        }
    }

    let mut sorted = probes.clone();
    sorted.sort_unstable();
    let monotone = sorted.windows(2).all(|w| w[0].1 >= w[1].1);
    let mut linear_fallback = false;
    if !monotone {
        linear_fallback = true;
        for s in 1..=n {
            if probe(s, &mut probes)? <= budget {
                best = s;
                break;
            }
        }
    }

    let mut plan = build_disk_plan(samples, tiers, best, M)?;
    plan.space_budget = Some(budget);
    let space = space_usage(&plan, geometry);
    Ok(HeuristicOutcome {
        plan,
        space,
        probes,
        linear_fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub s: u32,
    pub m: u32,
    pub space: u64,
    /// `None` when the point violates the budget.
    pub cost: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct BruteForceOutcome {
    pub plan: DiskPlan,
    pub orders: Vec<CacheOrder>,
    pub cost: IoCost,
    pub space: u64,
    pub evaluated: Vec<GridPoint>,
}

/// Evaluates every `(s, m)` on the grid: builds the plan, reorders each
/// segment and prices the result. Returns the cheapest feasible point;
/// ties go to smaller space, then smaller `s`, then smaller `m`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_search(
    samples: &SampleSet,
    tiers: &MemoryTierPlan,
    budget: u64,
    geometry: PageGeometry,
    s_grid: &[u32],
    m_grid: &[u32],
    reorderer: Reorderer,
) -> Result<BruteForceOutcome> {
    if s_grid.is_empty() || m_grid.is_empty() {
        return Err(Error::invalid("search grids must be non-empty"));
    }
    let points: Vec<(u32, u32)> = s_grid
        .iter()
        .flat_map(|&s| m_grid.iter().map(move |&m| (s, m)))
        .collect();
    let evaluated = points
        .par_iter()
        .map(|&(s, m)| -> Result<GridPoint> {
            let space = space_for(samples, tiers, s, m, geometry)?;
            if space > budget {
                return Ok(GridPoint { s, m, space, cost: None });
            }
            let plan = build_disk_plan(samples, tiers, s, m)?;
            let orders = reorderer.apply(&plan, samples)?;
            let cost = io_cost(&plan, &orders, geometry)?;
            Ok(GridPoint {
                s,
                m,
                space,
                cost: Some(cost.total_pages),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = evaluated
        .iter()
        .filter_map(|p| p.cost.map(|c| (c, p.space, p.s, p.m)))
        .min();
    let Some((_, space, s, m)) = best else {
        let min_space = evaluated.iter().map(|p| p.space).min().unwrap_or(0);
        return Err(Error::Infeasible { min_space, budget });
    };

    let mut plan = build_disk_plan(samples, tiers, s, m)?;
    plan.space_budget = Some(budget);
    let orders = reorderer.apply(&plan, samples)?;
    let cost = io_cost(&plan, &orders, geometry)?;
    Ok(BruteForceOutcome {
        plan,
        orders,
        cost,
        space,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{assign_memory_tiers, count_frequencies};
    use crate::workload::{generate_sampleset, generate_synthetic_graph, GraphSample};
    use crate::NodeId;

    const GEOM: PageGeometry = PageGeometry {
        page_size: 4096,
        row_bytes: 512,
    };

    fn zipf_fixture() -> (SampleSet, MemoryTierPlan) {
        let g = generate_synthetic_graph(1000, 10, 1.0, 5).unwrap();
        let seeds: Vec<NodeId> = (0..1000).collect();
        let s = generate_sampleset(&g, &seeds, 10, &[5, 5], 8).unwrap();
        let f = count_frequencies(&s, 1000).unwrap();
        (s, assign_memory_tiers(&f, 50, 100))
    }

    #[test]
    fn unconstrained_budget_gives_unit_segments() {
        let (s, t) = zipf_fixture();
        let full = space_for(&s, &t, 1, 1, GEOM).unwrap();
        let out = heuristic_search(&s, &t, full, GEOM).unwrap();
        assert_eq!(out.plan.segment_size, 1);
        assert_eq!(out.plan.threshold, 1);
        assert!(out.space <= full);
    }

    #[test]
    fn infeasible_budget_reports_space_at_n() {
        let (s, t) = zipf_fixture();
        let at_n = space_for(&s, &t, s.len() as u32, 1, GEOM).unwrap();
        match heuristic_search(&s, &t, at_n - 1, GEOM) {
            Err(Error::Infeasible { min_space, budget }) => {
                assert_eq!(min_space, at_n);
                assert_eq!(budget, at_n - 1);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn bisection_agrees_with_linear_scan() {
        let (s, t) = zipf_fixture();
        let budget = 3 * 1000 * 512;
        let out = heuristic_search(&s, &t, budget, GEOM).unwrap();
        let n = s.len() as u32;
        let linear = (1..=n)
            .find(|&k| space_for(&s, &t, k, 1, GEOM).unwrap() <= budget)
            .unwrap();
        assert_eq!(out.plan.segment_size, linear);
        assert!(out.plan.segment_size > 1 && out.plan.segment_size < n);
        assert!(out.space <= budget);
    }

    #[test]
    fn singleton_grid_matches_heuristic_plus_reorder() {
        let (s, t) = zipf_fixture();
        let budget = 3 * 1000 * 512;
        let h = heuristic_search(&s, &t, budget, GEOM).unwrap();
        let r = Reorderer::MinHash { k: 4, rng_seed: 3 };
        let b = brute_force_search(&s, &t, budget, GEOM, &[h.plan.segment_size], &[1], r).unwrap();
        assert_eq!(b.plan, h.plan);
        assert_eq!(b.orders, r.apply(&h.plan, &s).unwrap());
    }

    fn toy() -> SampleSet {
        let lists: Vec<Vec<NodeId>> = vec![vec![0, 1, 2, 5, 6], vec![1, 2, 3, 6, 7]];
        SampleSet {
            fanout: vec![0],
            batch_size: 1,
            rng_seed: 0,
            batches: lists
                .into_iter()
                .enumerate()
                .map(|(i, nodes)| GraphSample { batch_id: i as u64, num_seeds: 0, nodes, hops: vec![vec![]] })
                .collect(),
        }
    }

    #[test]
    fn brute_force_is_the_exhaustive_argmin() {
        let s = toy();
        let t = MemoryTierPlan::empty();
        let geom = PageGeometry { page_size: 16, row_bytes: 8 };
        let r = Reorderer::MinHash { k: 2, rng_seed: 1 };
        for budget in [48, 64, 80, 200] {
            let out = brute_force_search(&s, &t, budget, geom, &[1, 2], &[1, 2, 3], r);
            // exhaustive oracle over every (s, m)
            let mut best: Option<(u64, u64, u32, u32)> = None;
            for sz in 1..=2 {
                for m in 1..=3 {
                    let plan = build_disk_plan(&s, &t, sz, m).unwrap();
                    let space = space_usage(&plan, geom);
                    if space > budget {
                        continue;
                    }
                    let cost = io_cost(&plan, &r.apply(&plan, &s).unwrap(), geom).unwrap().total_pages;
                    let cand = (cost, space, sz, m);
                    if best.is_none_or(|b| cand < b) {
                        best = Some(cand);
                    }
                }
            }
            match (out, best) {
                (Ok(o), Some((c, sp, sz, m))) => {
                    assert_eq!(o.cost.total_pages, c);
                    assert_eq!((o.space, o.plan.segment_size, o.plan.threshold), (sp, sz, m));
                    for p in &o.evaluated {
                        if let Some(pc) = p.cost {
                            assert!(o.cost.total_pages <= pc);
                        }
                    }
                }
                (Err(Error::Infeasible { .. }), None) => {}
                (o, b) => panic!("budget {budget}: {o:?} vs oracle {b:?}"),
            }
        }
        assert!(brute_force_search(&s, &t, 100, geom, &[], &[1], r).is_err());
    }
}
