use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Page-level traffic counters. `bytes_required` sums the row bytes of
/// features actually requested; `sample_pages` are the pages of `pages_read`
/// that carried embedded graph samples rather than features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoStats {
    pub page_size: u32,
    pub pages_read: u64,
    pub bytes_read: u64,
    pub bytes_required: u64,
    pub sequential_ops: u64,
    pub random_ops: u64,
    pub sample_pages: u64,
}

impl IoStats {
    pub fn feature_pages(&self) -> u64 {
        self.pages_read - self.sample_pages
    }

    pub fn feature_bytes_read(&self) -> u64 {
        self.feature_pages() * u64::from(self.page_size)
    }

    /// Feature bytes read over feature bytes required; `None` when nothing
    /// was required.
    pub fn amplification(&self) -> Option<f64> {
        (self.bytes_required > 0)
            .then(|| self.feature_bytes_read() as f64 / self.bytes_required as f64)
    }

    /// Counter growth from `earlier` to `self`.
    pub fn since(&self, earlier: &IoStats) -> IoStats {
        IoStats {
            page_size: self.page_size,
            pages_read: self.pages_read - earlier.pages_read,
            bytes_read: self.bytes_read - earlier.bytes_read,
            bytes_required: self.bytes_required - earlier.bytes_required,
            sequential_ops: self.sequential_ops - earlier.sequential_ops,
            random_ops: self.random_ops - earlier.random_ops,
            sample_pages: self.sample_pages - earlier.sample_pages,
        }
    }
}

/// Shared atomic counters behind every reader of one store.
#[derive(Debug, Default)]
pub struct IoCounters {
    page_size: u32,
    pages_read: AtomicU64,
    bytes_read: AtomicU64,
    bytes_required: AtomicU64,
    sequential_ops: AtomicU64,
    random_ops: AtomicU64,
    sample_pages: AtomicU64,
}

impl IoCounters {
    pub fn new(page_size: u32) -> Self {
        Self {
            page_size,
            ..Self::default()
        }
    }

    pub fn page_size(&self) -> u32 {
        self.page_size
    }

    pub(crate) fn record_sequential(&self, pages: u64) {
        self.pages_read.fetch_add(pages, Ordering::Relaxed);
        self.bytes_read
            .fetch_add(pages * u64::from(self.page_size), Ordering::Relaxed);
        self.sequential_ops.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_random(&self, pages: u64) {
        self.pages_read.fetch_add(pages, Ordering::Relaxed);
        self.bytes_read
            .fetch_add(pages * u64::from(self.page_size), Ordering::Relaxed);
        self.random_ops.fetch_add(pages, Ordering::Relaxed);
    }

    pub(crate) fn add_required(&self, bytes: u64) {
        self.bytes_required.fetch_add(bytes, Ordering::Relaxed);
    }

    pub(crate) fn add_sample_pages(&self, pages: u64) {
        self.sample_pages.fetch_add(pages, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> IoStats {
        IoStats {
            page_size: self.page_size,
            pages_read: self.pages_read.load(Ordering::Relaxed),
            bytes_read: self.bytes_read.load(Ordering::Relaxed),
            bytes_required: self.bytes_required.load(Ordering::Relaxed),
            sequential_ops: self.sequential_ops.load(Ordering::Relaxed),
            random_ops: self.random_ops.load(Ordering::Relaxed),
            sample_pages: self.sample_pages.load(Ordering::Relaxed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplification_ignores_sample_pages() {
        let c = IoCounters::new(4096);
        c.record_sequential(3);
        c.add_sample_pages(1);
        c.add_required(2 * 4096);
        let s = c.snapshot();
        assert_eq!(s.bytes_read, 3 * 4096);
        assert_eq!(s.feature_pages(), 2);
        assert_eq!(s.amplification(), Some(1.0));
        assert_eq!(IoStats::default().amplification(), None);
    }

    #[test]
    fn since_subtracts_fieldwise() {
        let c = IoCounters::new(512);
        c.record_random(2);
        let a = c.snapshot();
        c.record_random(5);
        c.record_sequential(1);
        let d = c.snapshot().since(&a);
        assert_eq!((d.pages_read, d.random_ops, d.sequential_ops), (6, 5, 1));
        assert_eq!(d.bytes_read, 6 * 512);
    }
}
