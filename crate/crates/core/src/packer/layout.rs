use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AddressTables;
use crate::error::{Error, Result};
use crate::workload::{GraphSample, PageGeometry};
use crate::NodeId;

pub const LAYOUT_VERSION: u32 = 1;
pub const LAYOUT_MANIFEST: &str = "manifest.toml";
pub const ADDRESS_TABLES: &str = "address_tables.bin";

/// A batch's chunk file: packed feature rows, then the embedded graph sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkFile {
    pub batch_id: u64,
    pub segment_id: u32,
    pub path: String,
    pub feature_offset: u64,
    /// Page-padded length of the feature region.
    pub feature_len: u64,
    pub sample_offset: u64,
    /// Unpadded length of the sample record.
    pub sample_len: u64,
    /// Row order inside the feature region.
    pub packed: Vec<NodeId>,
}

impl ChunkFile {
    /// Page-padded length of the sample section.
    pub fn sample_span(&self, page_size: u32) -> u64 {
        self.sample_len.div_ceil(u64::from(page_size)) * u64::from(page_size)
    }

    pub fn file_len(&self, page_size: u32) -> u64 {
        self.sample_offset + self.sample_span(page_size)
    }
}

/// A segment's shared disk cache, rows in `nodes` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentFile {
    pub segment_id: u32,
    pub path: String,
    pub nodes: Vec<NodeId>,
}

/// A memory-tier file, loaded whole at training start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierFile {
    pub path: String,
    pub nodes: Vec<NodeId>,
}

/// Describes every file of a materialized layout. Paths are relative to the
/// layout directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutManifest {
    pub version: u32,
    pub num_nodes: u64,
    pub dim: u32,
    pub page_size: u32,
    pub row_bytes: u32,
    pub fpp: u32,
    pub num_hops: u32,
    pub segment_size: u32,
    pub threshold: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_budget: Option<u64>,
    pub address_tables: String,
    pub fast_tier: TierFile,
    pub host_tier: TierFile,
    pub segments: Vec<SegmentFile>,
    pub batches: Vec<ChunkFile>,
}

impl LayoutManifest {
    pub fn geometry(&self) -> PageGeometry {
        PageGeometry {
            page_size: self.page_size,
            row_bytes: self.row_bytes,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(format!("layout manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self =
            toml::from_str(text).map_err(|e| Error::format(format!("layout manifest: {e}")))?;
        if m.version != LAYOUT_VERSION {
            return Err(Error::format(format!(
                "layout manifest version {} unsupported",
                m.version
            )));
        }
        if m.row_bytes == 0 || m.page_size == 0 || m.fpp != m.page_size / m.row_bytes {
            return Err(Error::format("layout manifest has inconsistent page geometry"));
        }
        Ok(m)
    }

    /// Bytes of all packed feature regions plus all segment cache files.
    pub fn disk_feature_bytes(&self) -> u64 {
        let geom = self.geometry();
        self.batches.iter().map(|c| c.feature_len).sum::<u64>()
            + self
                .segments
                .iter()
                .map(|s| geom.bytes_for(s.nodes.len() as u64))
                .sum::<u64>()
    }
}

/// Appends `sample` to a page-aligned chunk, padded to a whole page.
/// Returns the sample's `(offset, unpadded length)`.
pub fn embed_graph_sample(chunk: &mut Vec<u8>, sample: &GraphSample, page_size: u32) -> (u64, u64) {
    let page = page_size as usize;
    debug_assert_eq!(chunk.len() % page, 0);
    let offset = chunk.len() as u64;
    let record = sample.to_record();
    let len = record.len() as u64;
    chunk.extend_from_slice(&record);
    chunk.resize(chunk.len().div_ceil(page) * page, 0);
    (offset, len)
}

/// A packed layout opened for training.
#[derive(Debug, Clone)]
pub struct DiskLayout {
    pub dir: PathBuf,
    pub manifest: LayoutManifest,
    pub tables: AddressTables,
}

impl DiskLayout {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(LAYOUT_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::at(&path, e))?;
        let manifest = LayoutManifest::from_toml(&text)?;
        let tables = AddressTables::read(&dir.join(&manifest.address_tables))?;
        if tables.batches.len() != manifest.batches.len() {
            return Err(Error::inconsistent(format!(
                "{} address tables for {} chunks",
                tables.batches.len(),
                manifest.batches.len()
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            tables,
        })
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.dir.join(relative)
    }

    pub fn num_batches(&self) -> usize {
        self.manifest.batches.len()
    }
}
