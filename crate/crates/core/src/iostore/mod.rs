//! Page-granular reads with exact accounting, and the runtime feature store
//! that gathers a batch in two steps: disk reads into a partial input, then
//! a merge with the memory tiers.

mod page_file;
mod stats;
mod store;

pub use page_file::PageFile;
pub use stats::{IoCounters, IoStats};
pub use store::{
    merge_page_requests, AssembledBatch, AssembledFeatures, FeatureSource, FineGrainedStore,
    LayoutStore, PartialInput, StoreOptions,
};

#[cfg(test)]
mod tests;
