//! Graphs, feature files and offline-sampled mini-batches, together with
//! their little-endian binary file formats.

mod codec;
mod features;
mod generate;
mod graph;
mod sample;
mod sampling;

pub use features::{
    direct_gather, synthetic_feature_value, write_feature_file, write_synthetic_features,
    FeatureFile, FeatureHeader, PageGeometry, DTYPE_F32, FEATURE_HEADER_BYTES,
};
pub use generate::{
    generate_workload, workload_paths, Workload, WorkloadParams, FEATURE_FILE, GRAPH_FILE,
    SAMPLE_FILE,
};
pub use graph::{generate_synthetic_graph, Graph};
pub use sample::{GraphSample, SampleSet};
pub use sampling::{generate_sampleset, neighbor_sample, KeyedChooser, NeighborChooser};

pub(crate) use codec::{ByteReader, ByteWriter};

/// SplitMix64 finalizer; used to derive independent RNG streams from a key.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of key parts into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| mix64(acc ^ mix64(p)))
}
