use crate::error::{Error, Result};
use crate::workload::SampleSet;

/// Number of batches that need each node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    pub counts: Vec<u64>,
    pub total_accesses: u64,
}

impl FrequencyTable {
    pub fn num_nodes(&self) -> usize {
        self.counts.len()
    }

    pub fn num_accessed(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

pub fn count_frequencies(samples: &SampleSet, num_nodes: usize) -> Result<FrequencyTable> {
    let mut counts = vec![0u64; num_nodes];
    let mut total = 0u64;
    for b in &samples.batches {
        for &v in &b.nodes {
            let c = counts.get_mut(v as usize).ok_or_else(|| {
                Error::invalid(format!(
                    "batch {}: node {v} out of range for {num_nodes} nodes",
                    b.batch_id
                ))
            })?;
            *c += 1;
            total += 1;
        }
    }
    Ok(FrequencyTable {
        counts,
        total_accesses: total,
    })
}

/// Share of all accesses (in percent) received by nodes in each popularity
/// band: top 1%, 1-5%, 5-10%, and the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewReport {
    pub top_1: f64,
    pub top_1_to_5: f64,
    pub top_5_to_10: f64,
    pub rest: f64,
}

pub fn skew_report(freq: &FrequencyTable) -> Result<SkewReport> {
    if freq.total_accesses == 0 {
        return Err(Error::invalid("skew report needs at least one access"));
    }
    let mut sorted = freq.counts.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let n = sorted.len();
    let cut = |pct: usize| (n * pct).div_ceil(100).min(n);
    let (c1, c5, c10) = (cut(1), cut(5), cut(10));
    let share = |lo: usize, hi: usize| {
        let s: u64 = sorted[lo..hi].iter().sum();
        100.0 * s as f64 / freq.total_accesses as f64
    };
    Ok(SkewReport {
        top_1: share(0, c1),
        top_1_to_5: share(c1, c5),
        top_5_to_10: share(c5, c10),
        rest: share(c10, n),
    })
}
