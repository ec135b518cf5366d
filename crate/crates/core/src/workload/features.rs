use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::codec::{ByteReader, ByteWriter};
use super::derive_seed;
use crate::error::{Error, Result};
use crate::NodeId;

const FEATURE_MAGIC: &[u8; 4] = b"OOCF";
const FEATURE_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;
/// magic + version + num_nodes + dim + dtype + page_size
pub const FEATURE_HEADER_BYTES: usize = 4 + 4 + 8 + 4 + 4 + 4;

/// Shape of a page-aligned feature file. Rows never straddle a page: each
/// data page holds `fpp` rows followed by zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub num_nodes: u64,
    pub dim: u32,
    pub page_size: u32,
}

impl FeatureHeader {
    pub fn new(num_nodes: u64, dim: u32, page_size: u32) -> Result<Self> {
        let h = Self {
            num_nodes,
            dim,
            page_size,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("feature dim must be at least 1"));
        }
        if self.page_size == 0 {
            return Err(Error::invalid("page size must be positive"));
        }
        let row = u64::from(self.dim) * 4;
        if row > u64::from(self.page_size) {
            return Err(Error::invalid(format!(
                "row of {row} bytes does not fit in a {}-byte page",
                self.page_size
            )));
        }
        Ok(())
    }

    pub fn row_bytes(&self) -> u32 {
        self.dim * 4
    }

    pub fn geometry(&self) -> PageGeometry {
        PageGeometry {
            page_size: self.page_size,
            row_bytes: self.row_bytes(),
        }
    }

    pub fn header_pages(&self) -> u64 {
        (FEATURE_HEADER_BYTES as u64).div_ceil(u64::from(self.page_size))
    }

    /// Byte offset of data page 0.
    pub fn data_offset(&self) -> u64 {
        self.header_pages() * u64::from(self.page_size)
    }

    pub fn data_pages(&self) -> u64 {
        self.geometry().pages_for(self.num_nodes)
    }

    pub fn file_len(&self) -> u64 {
        self.data_offset() + self.data_pages() * u64::from(self.page_size)
    }

    /// Data page index holding node `v`.
    pub fn page_of(&self, v: NodeId) -> u64 {
        u64::from(v) / u64::from(self.geometry().fpp())
    }

    /// Absolute byte offset of node `v`'s row.
    pub fn row_offset(&self, v: NodeId) -> u64 {
        let fpp = u64::from(self.geometry().fpp());
        let v = u64::from(v);
        self.data_offset()
            + (v / fpp) * u64::from(self.page_size)
            + (v % fpp) * u64::from(self.row_bytes())
    }

    pub fn feature_bytes(&self) -> u64 {
        self.num_nodes * u64::from(self.row_bytes())
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(FEATURE_MAGIC);
        w.u32(FEATURE_VERSION);
        w.u64(self.num_nodes);
        w.u32(self.dim);
        w.u32(DTYPE_F32);
        w.u32(self.page_size);
        w.into_inner()
    }

    fn decode(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data, "feature file header");
        r.magic(FEATURE_MAGIC)?;
        r.version(FEATURE_VERSION)?;
        let num_nodes = r.u64()?;
        let dim = r.u32()?;
        let dtype = r.u32()?;
        if dtype != DTYPE_F32 {
            return Err(Error::format(format!("unsupported dtype code {dtype}")));
        }
        let page_size = r.u32()?;
        let h = Self {
            num_nodes,
            dim,
            page_size,
        };
        h.validate()
            .map_err(|e| Error::format(format!("feature file header: {e}")))?;
        Ok(h)
    }
}

/// Page size and row width; everything the page arithmetic needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageGeometry {
    pub page_size: u32,
    pub row_bytes: u32,
}

impl PageGeometry {
    /// Rows per page.
    pub fn fpp(&self) -> u32 {
        self.page_size / self.row_bytes
    }

    /// Whole pages needed to hold `rows` consecutive rows.
    pub fn pages_for(&self, rows: u64) -> u64 {
        rows.div_ceil(u64::from(self.fpp()))
    }

    pub fn bytes_for(&self, rows: u64) -> u64 {
        self.pages_for(rows) * u64::from(self.page_size)
    }

    /// Byte offset of row `i` in a file of packed, page-padded rows.
    pub fn slot_offset(&self, i: u64) -> u64 {
        let fpp = u64::from(self.fpp());
        (i / fpp) * u64::from(self.page_size) + (i % fpp) * u64::from(self.row_bytes)
    }
}

/// An opened, validated feature file on disk.
#[derive(Debug, Clone)]
pub struct FeatureFile {
    pub path: PathBuf,
    pub header: FeatureHeader,
}

impl FeatureFile {
    pub fn open(path: &Path) -> Result<Self> {
        let mut f = File::open(path).map_err(|e| Error::at(path, e))?;
        let mut head = [0u8; FEATURE_HEADER_BYTES];
        std::io::Read::read_exact(&mut f, &mut head).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format("feature file truncated inside header")
            } else {
                Error::at(path, e)
            }
        })?;
        let header = FeatureHeader::decode(&head)?;
        let len = f.metadata().map_err(|e| Error::at(path, e))?.len();
        if len != header.file_len() {
            return Err(Error::format(format!(
                "feature file is {len} bytes, header implies {}",
                header.file_len()
            )));
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
        })
    }
}

/// Streams a feature file page by page; `fill` writes node `v`'s row.
pub fn write_feature_file(
    path: &Path,
    header: FeatureHeader,
    mut fill: impl FnMut(NodeId, &mut [f32]),
) -> Result<FeatureFile> {
    header.validate()?;
    if header.num_nodes > u64::from(NodeId::MAX) + 1 {
        return Err(Error::invalid("too many nodes for 32-bit node ids"));
    }
    let file = File::create(path).map_err(|e| Error::at(path, e))?;
    let mut out = BufWriter::new(file);
    let page = header.page_size as usize;
    let mut first = header.encode();
    first.resize(header.header_pages() as usize * page, 0);
    out.write_all(&first).map_err(|e| Error::at(path, e))?;

    let fpp = header.geometry().fpp() as u64;
    let dim = header.dim as usize;
    let mut row = vec![0f32; dim];
    let mut buf = vec![0u8; page];
    for p in 0..header.data_pages() {
        buf.fill(0);
        let lo = p * fpp;
        let hi = (lo + fpp).min(header.num_nodes);
        for v in lo..hi {
            row.fill(0.0);
            fill(v as NodeId, &mut row);
            let at = ((v - lo) as usize) * dim * 4;
            for (j, x) in row.iter().enumerate() {
                buf[at + 4 * j..at + 4 * j + 4].copy_from_slice(&x.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| Error::at(path, e))?;
    }
    out.flush().map_err(|e| Error::at(path, e))?;
    Ok(FeatureFile {
        path: path.to_path_buf(),
        header,
    })
}

/// Deterministic pseudo-random feature value in [-1, 1).
pub fn synthetic_feature_value(rng_seed: u64, node: NodeId, j: u32) -> f32 {
    let h = derive_seed(&[rng_seed, u64::from(node), u64::from(j)]);
    ((h >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
}

pub fn write_synthetic_features(
    path: &Path,
    num_nodes: u64,
    dim: u32,
    page_size: u32,
    rng_seed: u64,
) -> Result<FeatureFile> {
    let header = FeatureHeader::new(num_nodes, dim, page_size)?;
    write_feature_file(path, header, |v, row| {
        for (j, x) in row.iter_mut().enumerate() {
            *x = synthetic_feature_value(rng_seed, v, j as u32);
        }
    })
}

/// Reference gather: reads the raw file and copies out the requested rows
/// in the given order, without going through any store or cache.
pub fn direct_gather(file: &FeatureFile, nodes: &[NodeId]) -> Result<Vec<f32>> {
    let data = std::fs::read(&file.path).map_err(|e| Error::at(&file.path, e))?;
    let h = file.header;
    let mut out = Vec::with_capacity(nodes.len() * h.dim as usize);
    for &v in nodes {
        if u64::from(v) >= h.num_nodes {
            return Err(Error::invalid(format!("node {v} outside feature file")));
        }
        let at = h.row_offset(v) as usize;
        let row = &data[at..at + h.row_bytes() as usize];
        out.extend(
            row.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
    }
    Ok(out)
}
