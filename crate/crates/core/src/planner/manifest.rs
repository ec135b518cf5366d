use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiskPlan, MemoryTierPlan};
use crate::error::{Error, Result};

pub const PLAN_MANIFEST_VERSION: u32 = 1;

/// Text (TOML) form of a layout plan, consumed by the packer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanManifest {
    pub version: u32,
    pub num_nodes: u64,
    pub dim: u32,
    pub page_size: u32,
    pub row_bytes: u32,
    pub fpp: u32,
    pub num_batches: u64,
    /// MinHash functions used when the packer orders cache files.
    pub num_hashes: u32,
    pub reorder_seed: u64,
    /// Whether cache files are MinHash-ordered (`false` keeps ID order).
    pub reorder: bool,
    pub tiers: MemoryTierPlan,
    pub disk: DiskPlan,
}

impl PlanManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(format!("plan manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self =
            toml::from_str(text).map_err(|e| Error::format(format!("plan manifest: {e}")))?;
        if m.version != PLAN_MANIFEST_VERSION {
            return Err(Error::format(format!(
                "plan manifest version {} unsupported",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::at(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::at(path, e))?;
        Self::from_toml(&text)
    }
}
