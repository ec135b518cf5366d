//! Materializes a planned layout: one chunk per batch (packed rows plus the
//! embedded graph sample), one cache file per segment, two memory-tier
//! files, the address tables, and a TOML manifest tying them together.

mod layout;
mod pack;
mod tables;

pub use layout::{
    embed_graph_sample, ChunkFile, DiskLayout, LayoutManifest, SegmentFile, TierFile,
    ADDRESS_TABLES, LAYOUT_MANIFEST, LAYOUT_VERSION,
};
pub use pack::{batched_pack, individual_pack, layout_manifest, PackInput, PackMode, PackReport};
pub use tables::{build_address_tables, AddressTables, BatchTable, Location};
