use crate::iostore::AssembledBatch;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over `bytes`, continuing from `hash`.
pub fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Order-dependent digest of a sequence of digests.
pub fn combine_digests(digests: &[u64]) -> u64 {
    digests
        .iter()
        .fold(FNV_OFFSET, |h, d| fnv1a(h, &d.to_le_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub batch_id: u64,
    /// One row per seed, in seed order.
    pub embeddings: Vec<f32>,
    pub digest: u64,
}

/// Weight-free mean aggregation over the sampled hops.
///
/// Layers run from the deepest hop up to the seeds. In each layer a node with
/// sampled neighbors becomes its previous value plus the mean of those
/// neighbors' previous values; nodes without neighbors keep their value.
pub fn trainer_stub(batch: &AssembledBatch) -> TrainOutput {
    let nodes = batch.sample.nodes.len();
    let dim = batch.features.rows.len().checked_div(nodes).unwrap_or(0);
    let mut h = batch.features.rows.clone();
    let mut sum = vec![0f32; h.len()];
    let mut count = vec![0u32; nodes];
    for edges in batch.sample.hops.iter().rev() {
        if edges.is_empty() {
            continue;
        }
        sum.fill(0.0);
        count.fill(0);
        for &(a, b) in edges {
            let (a, b) = (a as usize, b as usize);
            for j in 0..dim {
                sum[a * dim + j] += h[b * dim + j];
            }
            count[a] += 1;
        }
        for (v, &c) in count.iter().enumerate() {
            if c > 0 {
                for j in 0..dim {
                    h[v * dim + j] += sum[v * dim + j] / c as f32;
                }
            }
        }
    }
    let seeds = batch.sample.num_seeds as usize;
    h.truncate(seeds * dim);
    let mut digest = fnv1a(FNV_OFFSET, &batch.sample.batch_id.to_le_bytes());
    for x in &h {
        digest = fnv1a(digest, &x.to_bits().to_le_bytes());
    }
    TrainOutput {
        batch_id: batch.sample.batch_id,
        embeddings: h,
        digest,
    }
}
