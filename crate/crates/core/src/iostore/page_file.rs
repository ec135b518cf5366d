use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::os::unix::fs::{FileExt, OpenOptionsExt};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::IoCounters;
use crate::error::{Error, Result};

/// Read-only file accessed in whole pages, with every read charged to a
/// shared [`IoCounters`].
///
/// With `direct` set the file is opened with `O_DIRECT` and reads go through
/// a page-aligned bounce buffer. Filesystems that refuse the flag, or reject
/// an aligned direct read, fall back to buffered reads; the counters are
/// logical either way.
#[derive(Debug)]
pub struct PageFile {
    file: File,
    direct_file: Option<File>,
    path: PathBuf,
    len: u64,
    counters: Arc<IoCounters>,
}

impl PageFile {
    pub fn open(path: &Path, counters: Arc<IoCounters>, direct: bool) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::at(path, e))?;
        let direct_file = if direct {
            OpenOptions::new()
                .read(true)
                .custom_flags(libc::O_DIRECT)
                .open(path)
                .ok()
        } else {
            None
        };
        let len = file.metadata().map_err(|e| Error::at(path, e))?.len();
        Ok(Self {
            file,
            direct_file,
            path: path.to_path_buf(),
            len,
            counters,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_direct(&self) -> bool {
        self.direct_file.is_some()
    }

    pub fn page_size(&self) -> u32 {
        self.counters.page_size()
    }

    pub fn num_pages(&self) -> u64 {
        self.len.div_ceil(u64::from(self.page_size()))
    }

    fn raw_read(&self, offset: u64, len: usize) -> Result<Vec<u8>> {
        if let Some(direct) = &self.direct_file {
            let page = self.page_size() as usize;
            let mut bounce = vec![0u8; len + page];
            let skip = bounce.as_ptr().align_offset(page);
            let aligned = &mut bounce[skip..skip + len];
            if direct.read_exact_at(aligned, offset).is_ok() {
                return Ok(aligned.to_vec());
            }
        }
        let mut buf = vec![0u8; len];
        self.file
            .read_exact_at(&mut buf, offset)
            .map_err(|e| Error::at(&self.path, e))?;
        Ok(buf)
    }

    fn check_range(&self, offset: u64, len: u64) -> Result<()> {
        let page = u64::from(self.page_size());
        if !offset.is_multiple_of(page) || !len.is_multiple_of(page) {
            return Err(Error::invalid(format!(
                "{}: read at {offset}+{len} is not page-aligned",
                self.path.display()
            )));
        }
        if offset.checked_add(len).is_none_or(|end| end > self.len) {
            return Err(Error::invalid(format!(
                "{}: read at {offset}+{len} past end of {}-byte file",
                self.path.display(),
                self.len
            )));
        }
        Ok(())
    }

    /// One sequential read of `length` bytes at `offset`.
    pub fn read_sequential(&self, offset: u64, length: u64) -> Result<Vec<u8>> {
        if length == 0 {
            return Err(Error::invalid("zero-length sequential read"));
        }
        self.check_range(offset, length)?;
        let data = self.raw_read(offset, length as usize)?;
        self.counters
            .record_sequential(length / u64::from(self.page_size()));
        Ok(data)
    }

    /// Reads each distinct page once, returned in ascending page order.
    /// `threads > 1` splits the pages across that many reader threads.
    pub fn read_pages(&self, pages: &[u64], threads: usize) -> Result<Vec<(u64, Vec<u8>)>> {
        let distinct: Vec<u64> = pages.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let page = u64::from(self.page_size());
        for &p in &distinct {
            self.check_range(p * page, page)?;
        }
        let read_one = |p: u64| -> Result<(u64, Vec<u8>)> {
            let data = self.raw_read(p * page, page as usize)?;
            self.counters.record_random(1);
            Ok((p, data))
        };
        if threads <= 1 || distinct.len() <= 1 {
            return distinct.into_iter().map(read_one).collect();
        }
        let per = distinct.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = distinct
                .chunks(per)
                .map(|part| scope.spawn(move || part.iter().map(|&p| read_one(p)).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::with_capacity(distinct.len());
            for h in handles {
                out.extend(h.join().map_err(|_| Error::Pipeline("page reader panicked".into()))??);
            }
            Ok(out)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(pages: usize) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let data: Vec<u8> = (0..pages * 64).map(|i| (i / 64) as u8).collect();
        std::fs::write(&path, data).unwrap();
        (dir, path)
    }

    #[test]
    fn sequential_reads_count_pages_and_ops() {
        let (_d, path) = fixture(8);
        let c = Arc::new(IoCounters::new(64));
        let f = PageFile::open(&path, c.clone(), false).unwrap();
        assert_eq!(f.read_sequential(64, 64).unwrap(), vec![1u8; 64]);
        let s = c.snapshot();
        assert_eq!((s.pages_read, s.sequential_ops, s.bytes_read), (1, 1, 64));
        assert!(f.read_sequential(0, 0).is_err());
        assert!(f.read_sequential(1, 64).is_err());
        assert!(f.read_sequential(0, 100).is_err());
        assert!(f.read_sequential(7 * 64, 128).is_err());
        assert_eq!(c.snapshot().pages_read, 1);
    }

    #[test]
    fn random_reads_dedup() {
        let (_d, path) = fixture(200);
        let c = Arc::new(IoCounters::new(64));
        let f = PageFile::open(&path, c.clone(), false).unwrap();
        let got = f.read_pages(&[3, 3, 5], 1).unwrap();
        assert_eq!(got.iter().map(|p| p.0).collect::<Vec<_>>(), vec![3, 5]);
        assert_eq!(got[1].1, vec![5u8; 64]);
        assert_eq!(c.snapshot().random_ops, 2);
        assert!(f.read_pages(&[], 1).unwrap().is_empty());
        assert!(f.read_pages(&[200], 1).is_err());

        let before = c.snapshot();
        let ids: Vec<u64> = (0..100).map(|i| i * 2).collect();
        let many = f.read_pages(&ids, 4).unwrap();
        assert_eq!(many.len(), 100);
        assert!(many.iter().all(|(p, d)| d[0] == *p as u8));
        assert_eq!(c.snapshot().since(&before).bytes_read, 100 * 64);
    }

    #[test]
    fn direct_mode_returns_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let data: Vec<u8> = (0..4 * 4096).map(|i| (i % 251) as u8).collect();
        std::fs::write(&path, &data).unwrap();
        let c = Arc::new(IoCounters::new(4096));
        let f = PageFile::open(&path, c.clone(), true).unwrap();
        assert_eq!(f.read_sequential(4096, 8192).unwrap(), data[4096..12288]);
        assert_eq!(f.read_pages(&[3], 1).unwrap()[0].1, data[3 * 4096..]);
        assert_eq!(c.snapshot().pages_read, 3);
    }
}
