use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, Graph, GraphSample, SampleSet};
use crate::error::{Error, Result};
use crate::NodeId;

/// Picks which neighbors of a frontier node to keep at a given hop.
pub trait NeighborChooser {
    /// Returns `count` distinct positions in `0..degree`. Only called when
    /// `0 < count < degree`.
    fn choose(&mut self, hop: usize, node: NodeId, degree: usize, count: usize) -> Vec<usize>;
}

/// Counter-based chooser: every (seed, batch, hop, node) draw uses its own
/// RNG stream, so results do not depend on visit order or thread count.
#[derive(Debug, Clone, Copy)]
pub struct KeyedChooser {
    pub rng_seed: u64,
    pub batch_id: u64,
}

impl NeighborChooser for KeyedChooser {
    fn choose(&mut self, hop: usize, node: NodeId, degree: usize, count: usize) -> Vec<usize> {
        let key = derive_seed(&[self.rng_seed, self.batch_id, hop as u64, u64::from(node)]);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rand::seq::index::sample(&mut rng, degree, count).into_vec()
    }
}

/// Node-wise neighbor sampling without replacement.
///
/// Hop `h` expands every distinct node reached at hop `h - 1` (the seeds for
/// hop 0) by `min(fanout[h], degree)` neighbors.
pub fn neighbor_sample(
    graph: &Graph,
    batch_id: u64,
    seeds: &[NodeId],
    fanout: &[u32],
    chooser: &mut impl NeighborChooser,
) -> Result<GraphSample> {
    if fanout.is_empty() {
        return Err(Error::invalid("fanout must have at least one hop"));
    }
    let n = graph.num_nodes();
    if let Some(bad) = seeds.iter().find(|&&s| s as usize >= n) {
        return Err(Error::invalid(format!("seed {bad} out of range for {n} nodes")));
    }

    let mut nodes: Vec<NodeId> = Vec::new();
    let mut local: HashMap<NodeId, u32> = HashMap::new();
    let mut intern = |v: NodeId, nodes: &mut Vec<NodeId>| -> u32 {
        *local.entry(v).or_insert_with(|| {
            nodes.push(v);
            nodes.len() as u32 - 1
        })
    };

    for &s in seeds {
        intern(s, &mut nodes);
    }
    let num_seeds = nodes.len() as u32;
    let mut frontier = nodes.clone();
    let mut hops = Vec::with_capacity(fanout.len());

    for (h, &f) in fanout.iter().enumerate() {
        let mut edges = Vec::new();
        let mut next = Vec::new();
        let mut next_seen = HashSet::new();
        for &u in &frontier {
            let nbrs = graph.neighbors(u);
            let take = (f as usize).min(nbrs.len());
            if take == 0 {
                continue;
            }
            let picks: Vec<usize> = if take == nbrs.len() {
                (0..take).collect()
            } else {
                chooser.choose(h, u, nbrs.len(), take)
            };
            let ui = intern(u, &mut nodes);
            for p in picks {
                let v = nbrs[p];
                let vi = intern(v, &mut nodes);
                edges.push((ui, vi));
                if next_seen.insert(v) {
                    next.push(v);
                }
            }
        }
        hops.push(edges);
        frontier = next;
    }

    Ok(GraphSample {
        batch_id,
        num_seeds,
        nodes,
        hops,
    })
}

/// Splits `seed_nodes` in order into batches of `batch_size` and samples each.
pub fn generate_sampleset(
    graph: &Graph,
    seed_nodes: &[NodeId],
    batch_size: usize,
    fanout: &[u32],
    rng_seed: u64,
) -> Result<SampleSet> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if fanout.is_empty() {
        return Err(Error::invalid("fanout must have at least one hop"));
    }
    let batches = seed_nodes
        .chunks(batch_size)
        .enumerate()
        .map(|(i, seeds)| {
            let mut chooser = KeyedChooser {
                rng_seed,
                batch_id: i as u64,
            };
            neighbor_sample(graph, i as u64, seeds, fanout, &mut chooser)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet {
        fanout: fanout.to_vec(),
        batch_size: batch_size as u32,
        rng_seed,
        batches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::generate_synthetic_graph;
    use proptest::prelude::*;

    /// Replays a fixed list of neighbor picks by node ID.
    struct Scripted(HashMap<NodeId, Vec<NodeId>>, Graph);

    impl NeighborChooser for Scripted {
        fn choose(&mut self, _: usize, node: NodeId, _: usize, _: usize) -> Vec<usize> {
            let nbrs = self.1.neighbors(node);
            self.0[&node]
                .iter()
                .map(|v| nbrs.iter().position(|x| x == v).unwrap())
                .collect()
        }
    }

    /// The 12-node graph of the node-wise sampling illustration.
    fn two_hop_graph() -> Graph {
        let mut adj = vec![Vec::new(); 12];
        let und = [
            (0, 1),
            (0, 3),
            (0, 5),
            (0, 6),
            (3, 2),
            (3, 7),
            (3, 4),
            (5, 9),
            (5, 11),
            (5, 10),
            (1, 8),
        ];
        for (a, b) in und {
            adj[a].push(b as NodeId);
            adj[b].push(a as NodeId);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        Graph::from_adjacency(&adj).unwrap()
    }

    #[test]
    fn two_hop_sample() {
        let g = two_hop_graph();
        let script = HashMap::from([
            (0, vec![3, 5]),
            (3, vec![2, 7]),
            (5, vec![9, 11]),
        ]);
        let mut c = Scripted(script, g.clone());
        let s = neighbor_sample(&g, 0, &[0], &[2, 2], &mut c).unwrap();
        assert_eq!(s.nodes, vec![0, 3, 5, 2, 7, 9, 11]);
        assert_eq!(s.hops[0], vec![(0, 1), (0, 2)]);
        assert_eq!(s.hops[1], vec![(1, 3), (1, 4), (2, 5), (2, 6)]);
        assert_eq!(s.seeds(), &[0]);
    }

    #[test]
    fn zero_fanout_keeps_only_seeds() {
        let g = generate_synthetic_graph(40, 5, 1.0, 3).unwrap();
        let mut c = KeyedChooser {
            rng_seed: 1,
            batch_id: 0,
        };
        let s = neighbor_sample(&g, 0, &[3, 9, 3], &[0], &mut c).unwrap();
        assert_eq!(s.nodes, vec![3, 9]);
        assert_eq!(s.num_seeds, 2);
        assert!(s.hops[0].is_empty());
    }

    #[test]
    fn star_full_neighborhood_regardless_of_rng() {
        let mut adj = vec![vec![1, 2, 3, 4, 5]];
        adj.extend((1..=5).map(|_| vec![0]));
        let g = Graph::from_adjacency(&adj).unwrap();
        let brute: HashSet<NodeId> = std::iter::once(0).chain(g.neighbors(0).iter().copied()).collect();
        for seed in 0..10 {
            let mut c = KeyedChooser {
                rng_seed: seed,
                batch_id: 0,
            };
            let s = neighbor_sample(&g, 0, &[0], &[5], &mut c).unwrap();
            assert_eq!(s.nodes.iter().copied().collect::<HashSet<_>>(), brute);
            assert_eq!(s.nodes.len(), 6);
        }
    }

    #[test]
    fn sampleset_partitioning() {
        let g = generate_synthetic_graph(3000, 2, 0.5, 4).unwrap();
        let seeds: Vec<NodeId> = (0..2049).collect();
        let s = generate_sampleset(&g, &seeds[..2048], 1024, &[1], 5).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(
            s.batches.iter().map(|b| b.batch_id).collect::<Vec<_>>(),
            vec![0, 1]
        );
        let s = generate_sampleset(&g, &seeds, 1024, &[1], 5).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.batches[2].num_seeds, 1);
        let again = generate_sampleset(&g, &seeds, 1024, &[1], 5).unwrap();
        assert_eq!(s.to_bytes(), again.to_bytes());

        let empty = generate_sampleset(&g, &[], 1024, &[1], 5).unwrap();
        assert!(empty.is_empty());
        assert!(generate_sampleset(&g, &seeds, 0, &[1], 5).is_err());
    }

    fn k_hop(g: &Graph, seeds: &[NodeId], hops: usize) -> HashSet<NodeId> {
        let mut all: HashSet<NodeId> = seeds.iter().copied().collect();
        let mut frontier: Vec<NodeId> = all.iter().copied().collect();
        for _ in 0..hops {
            let mut next = HashSet::new();
            for &u in &frontier {
                next.extend(g.neighbors(u).iter().copied());
            }
            all.extend(next.iter().copied());
            frontier = next.into_iter().collect();
        }
        all
    }

    proptest! {
        #[test]
        fn sample_stays_inside_k_hop_neighborhood(
            n in 2usize..120, deg in 0usize..6, seed in any::<u64>(),
            f0 in 0u32..4, f1 in 0u32..4, nseeds in 1usize..5,
        ) {
            let deg = deg.min(n - 1);
            let g = generate_synthetic_graph(n, deg, 1.0, seed).unwrap();
            let seeds: Vec<NodeId> = (0..nseeds.min(n) as NodeId).collect();
            let mut c = KeyedChooser { rng_seed: seed, batch_id: 0 };
            let s = neighbor_sample(&g, 0, &seeds, &[f0, f1], &mut c).unwrap();
            s.validate().unwrap();
            let reach = k_hop(&g, &seeds, 2);
            prop_assert!(s.nodes.iter().all(|v| reach.contains(v)));
            for (h, edges) in s.hops.iter().enumerate() {
                let f = [f0, f1][h] as usize;
                let mut per: HashMap<u32, usize> = HashMap::new();
                for &(a, b) in edges {
                    prop_assert!(g.neighbors(s.nodes[a as usize]).contains(&s.nodes[b as usize]));
                    *per.entry(a).or_default() += 1;
                }
                prop_assert!(per.values().all(|&c| c <= f));
            }
        }

        #[test]
        fn full_fanout_equals_exact_neighborhood(
            n in 2usize..200, deg in 0usize..5, seed in any::<u64>(), hops in 1usize..4,
        ) {
            let deg = deg.min(n - 1);
            let g = generate_synthetic_graph(n, deg, 0.7, seed).unwrap();
            let f = g.max_degree() as u32;
            let fanout = vec![f; hops];
            let mut c = KeyedChooser { rng_seed: seed ^ 1, batch_id: 3 };
            let s = neighbor_sample(&g, 3, &[0, 1], &fanout, &mut c).unwrap();
            let got: HashSet<NodeId> = s.nodes.iter().copied().collect();
            prop_assert_eq!(got, k_hop(&g, &[0, 1], hops));
        }
    }

    #[test]
    fn determinism_across_threads() {
        let g = generate_synthetic_graph(500, 8, 1.0, 11).unwrap();
        let seeds: Vec<NodeId> = (0..200).collect();
        let reference = generate_sampleset(&g, &seeds, 16, &[4, 3], 77).unwrap().to_bytes();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let g = g.clone();
                let seeds = seeds.clone();
                std::thread::spawn(move || generate_sampleset(&g, &seeds, 16, &[4, 3], 77).unwrap().to_bytes())
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), reference);
        }
    }
}
