use std::collections::HashMap;
use std::path::Path;

use super::LayoutManifest;
use crate::error::{Error, Result};
use crate::planner::{MemoryTierPlan, Tier};
use crate::workload::{ByteReader, ByteWriter, SampleSet};
use crate::NodeId;

const TABLES_MAGIC: &[u8; 4] = b"OOCT";
const TABLES_VERSION: u32 = 1;

/// Where one required feature lives at training time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Fast(u32),
    Host(u32),
    /// Row index inside the batch's chunk.
    Packed(u32),
    /// Page and slot inside the segment's cache file.
    Cache { page: u32, slot: u32 },
}

impl Location {
    fn encode(self) -> (u8, u32, u32) {
        match self {
            Location::Fast(s) => (0, s, 0),
            Location::Host(s) => (1, s, 0),
            Location::Packed(s) => (2, s, 0),
            Location::Cache { page, slot } => (3, page, slot),
        }
    }

    fn decode(tag: u8, a: u32, b: u32) -> Result<Self> {
        Ok(match tag {
            0 => Location::Fast(a),
            1 => Location::Host(a),
            2 => Location::Packed(a),
            3 => Location::Cache { page: a, slot: b },
            t => return Err(Error::format(format!("unknown location tag {t}"))),
        })
    }
}

/// Resolved addresses of one batch, in the batch's node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchTable {
    pub batch_id: u64,
    pub entries: Vec<(NodeId, Location)>,
}

impl BatchTable {
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AddressTables {
    pub batches: Vec<BatchTable>,
}

/// Resolves every required node of every batch against the layout; a node
/// found in zero or several places is an inconsistency.
pub fn build_address_tables(
    samples: &SampleSet,
    tiers: &MemoryTierPlan,
    manifest: &LayoutManifest,
) -> Result<AddressTables> {
    if manifest.batches.len() != samples.len() {
        return Err(Error::inconsistent(format!(
            "layout has {} chunks, sample set has {} batches",
            manifest.batches.len(),
            samples.len()
        )));
    }
    let fpp = manifest.fpp;
    let segment_maps: Vec<HashMap<NodeId, u32>> = manifest
        .segments
        .iter()
        .map(|s| s.nodes.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect())
        .collect();

    let mut batches = Vec::with_capacity(samples.len());
    for (sample, chunk) in samples.batches.iter().zip(&manifest.batches) {
        if chunk.batch_id != sample.batch_id {
            return Err(Error::inconsistent(format!(
                "chunk {} listed where batch {} belongs",
                chunk.batch_id, sample.batch_id
            )));
        }
        let cache = segment_maps.get(chunk.segment_id as usize).ok_or_else(|| {
            Error::inconsistent(format!(
                "batch {} refers to missing segment {}",
                chunk.batch_id, chunk.segment_id
            ))
        })?;
        let packed: HashMap<NodeId, u32> = chunk
            .packed
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i as u32))
            .collect();
        let mut entries = Vec::with_capacity(sample.nodes.len());
        for &v in &sample.nodes {
            let mut found = Vec::with_capacity(1);
            if let Some((tier, slot)) = tiers.slot_of(v) {
                found.push(match tier {
                    Tier::Fast => Location::Fast(slot),
                    Tier::Host => Location::Host(slot),
                });
            }
            if let Some(&i) = packed.get(&v) {
                found.push(Location::Packed(i));
            }
            if let Some(&p) = cache.get(&v) {
                found.push(Location::Cache {
                    page: p / fpp,
                    slot: p % fpp,
                });
            }
            match found.as_slice() {
                [loc] => entries.push((v, *loc)),
                _ => {
                    return Err(Error::inconsistent(format!(
                        "batch {}: node {v} resolves to {} locations",
                        sample.batch_id,
                        found.len()
                    )))
                }
            }
        }
        if entries.iter().filter(|e| matches!(e.1, Location::Packed(_))).count() != packed.len() {
            return Err(Error::inconsistent(format!(
                "batch {}: chunk holds nodes the batch does not need",
                sample.batch_id
            )));
        }
        batches.push(BatchTable {
            batch_id: sample.batch_id,
            entries,
        });
    }
    Ok(AddressTables { batches })
}

impl AddressTables {
    pub fn get(&self, batch_id: u64) -> Option<&BatchTable> {
        self.batches
            .get(batch_id as usize)
            .filter(|t| t.batch_id == batch_id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(TABLES_MAGIC);
        w.u32(TABLES_VERSION);
        w.u64(self.batches.len() as u64);
        for t in &self.batches {
            w.u64(t.batch_id);
            w.u32(t.entries.len() as u32);
            for &(v, loc) in &t.entries {
                let (tag, a, b) = loc.encode();
                w.u64(u64::from(v));
                w.u8(tag);
                w.u32(a);
                w.u32(b);
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data, "address tables");
        r.magic(TABLES_MAGIC)?;
        r.version(TABLES_VERSION)?;
        let n = r.u64()?;
        let mut batches = Vec::new();
        for _ in 0..n {
            let batch_id = r.u64()?;
            let count = r.u32()?;
            let entries = (0..count)
                .map(|_| {
                    let v = r.u64()?;
                    let v = NodeId::try_from(v)
                        .map_err(|_| Error::format(format!("node id {v} too large")))?;
                    let tag = r.u8()?;
                    let (a, b) = (r.u32()?, r.u32()?);
                    Ok((v, Location::decode(tag, a, b)?))
                })
                .collect::<Result<Vec<_>>>()?;
            batches.push(BatchTable { batch_id, entries });
        }
        r.finish()?;
        Ok(Self { batches })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::at(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::at(path, e))?;
        Self::from_bytes(&data)
    }
}
