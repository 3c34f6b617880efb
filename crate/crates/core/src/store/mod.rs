//! Ordered key-value storage with two interchangeable backends.
//!
//! Both backends keep their data in memory but route every page access
//! through a shared [`BufferPool`] simulation, which turns an operation
//! sequence into deterministic read/write/miss counts.

mod btree;
mod buffer;
mod lsm;

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub use btree::{BTree, BTreeShape};
pub use buffer::{BufferPool, PageId, PoolStats, SharedPool};
pub use lsm::Lsm;

use crate::error::{Error, Result};

pub type Entry = (Vec<u8>, Vec<u8>);

/// Boxed ascending entry stream returned by [`OrderedStore::range_scan`].
pub type Scan<'a> = Box<dyn Iterator<Item = Entry> + 'a>;

pub const DEFAULT_PAGE_SIZE: usize = 4096;
pub const SMALL_BUFFER_PAGES: usize = 256;
pub const LARGE_BUFFER_PAGES: usize = 65_536;
pub const DEFAULT_MEMTABLE_BYTES: usize = 64 * 1024;
pub const DEFAULT_MAX_RUNS: usize = 4;
pub const MIN_PAGE_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[serde(rename = "btree")]
    BTree,
    Lsm,
}

impl Backend {
    pub const ALL: [Backend; 2] = [Backend::BTree, Backend::Lsm];

    pub fn name(self) -> &'static str {
        match self {
            Backend::BTree => "btree",
            Backend::Lsm => "lsm",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "btree" | "b-tree" => Ok(Backend::BTree),
            "lsm" => Ok(Backend::Lsm),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreConfig {
    pub backend: Backend,
    pub page_size: usize,
    /// LSM only: memtable flush threshold in bytes.
    pub memtable_bytes: usize,
    /// LSM only: number of same-tier runs that triggers a merge.
    pub max_runs: usize,
}

impl StoreConfig {
    pub fn new(backend: Backend) -> Self {
        StoreConfig {
            backend,
            page_size: DEFAULT_PAGE_SIZE,
            memtable_bytes: DEFAULT_MEMTABLE_BYTES,
            max_runs: DEFAULT_MAX_RUNS,
        }
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size;
        self
    }

    pub fn with_memtable_bytes(mut self, bytes: usize) -> Self {
        self.memtable_bytes = bytes;
        self
    }
}

/// Entry rewrite for [`OrderedStore::update_range`]: `None` keeps the entry.
pub type RewriteFn<'a> = dyn FnMut(&[u8], &[u8]) -> Option<Vec<u8>> + 'a;

/// Access counters of one store. All fields only grow until [`OrderedStore::reset_counters`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsCounters {
    /// Pages read (b-tree nodes, LSM run pages), hits and misses alike.
    pub node_reads: u64,
    /// Pages modified or written.
    pub node_writes: u64,
    /// Page reads that had to come from the simulated disk.
    pub buffer_misses: u64,
    /// Pages written to the simulated disk (dirty evictions, LSM run writes).
    pub disk_writes: u64,
    pub key_comparisons: u64,
    /// Entries yielded by scans and point reads.
    pub entries_scanned: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub root_to_leaf_traversals: u64,
    /// Read-only searches (gets and scan openings).
    pub searches: u64,
    /// Entry-level mutations (puts, deletes, in-place updates).
    pub mutations: u64,
}

impl MetricsCounters {
    pub fn node_accesses(&self) -> u64 {
        self.node_reads + self.node_writes
    }

    /// Share of node accesses that are reads; 0 when there were none.
    pub fn read_share(&self) -> f64 {
        let total = self.node_accesses();
        if total == 0 {
            0.0
        } else {
            self.node_reads as f64 / total as f64
        }
    }
}

impl Add for MetricsCounters {
    type Output = MetricsCounters;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for MetricsCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.node_reads += rhs.node_reads;
        self.node_writes += rhs.node_writes;
        self.buffer_misses += rhs.buffer_misses;
        self.disk_writes += rhs.disk_writes;
        self.key_comparisons += rhs.key_comparisons;
        self.entries_scanned += rhs.entries_scanned;
        self.bytes_read += rhs.bytes_read;
        self.bytes_written += rhs.bytes_written;
        self.root_to_leaf_traversals += rhs.root_to_leaf_traversals;
        self.searches += rhs.searches;
        self.mutations += rhs.mutations;
    }
}

impl Sub for MetricsCounters {
    type Output = MetricsCounters;

    /// Counter delta between two snapshots (saturating).
    fn sub(self, rhs: Self) -> Self {
        MetricsCounters {
            node_reads: self.node_reads.saturating_sub(rhs.node_reads),
            node_writes: self.node_writes.saturating_sub(rhs.node_writes),
            buffer_misses: self.buffer_misses.saturating_sub(rhs.buffer_misses),
            disk_writes: self.disk_writes.saturating_sub(rhs.disk_writes),
            key_comparisons: self.key_comparisons.saturating_sub(rhs.key_comparisons),
            entries_scanned: self.entries_scanned.saturating_sub(rhs.entries_scanned),
            bytes_read: self.bytes_read.saturating_sub(rhs.bytes_read),
            bytes_written: self.bytes_written.saturating_sub(rhs.bytes_written),
            root_to_leaf_traversals: self
                .root_to_leaf_traversals
                .saturating_sub(rhs.root_to_leaf_traversals),
            searches: self.searches.saturating_sub(rhs.searches),
            mutations: self.mutations.saturating_sub(rhs.mutations),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceReport {
    /// Visible entries.
    pub entry_count: u64,
    /// Key plus value bytes of the visible entries.
    pub payload_bytes: u64,
    /// Pages held by the store times the page size (memtable rounded up to pages).
    pub allocated_bytes: u64,
    /// LSM sorted runs; 0 for the b-tree.
    pub run_count: u64,
}

impl Add for SpaceReport {
    type Output = SpaceReport;

    fn add(self, rhs: Self) -> Self {
        SpaceReport {
            entry_count: self.entry_count + rhs.entry_count,
            payload_bytes: self.payload_bytes + rhs.payload_bytes,
            allocated_bytes: self.allocated_bytes + rhs.allocated_bytes,
            run_count: self.run_count + rhs.run_count,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub counters: MetricsCounters,
    pub space: SpaceReport,
}

/// What a delete could tell about the key it removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeleteOutcome {
    Removed,
    Absent,
    /// LSM tombstone written without checking for a prior version.
    Blind,
}

/// Ordered key-value contract shared by the b-tree and the LSM forest.
///
/// Keys compare bytewise. Reads take `&self` and account their page accesses
/// through interior mutability, so a store must not be written while one of
/// its scans is alive.
pub trait OrderedStore {
    fn put(&mut self, key: &[u8], value: &[u8]);

    fn get(&self, key: &[u8]) -> Option<Vec<u8>>;

    fn delete(&mut self, key: &[u8]) -> DeleteOutcome;

    /// Read-modify-write of one entry in a single search. Returns `false`
    /// when the key is absent.
    fn update(&mut self, key: &[u8], f: &mut dyn FnMut(&[u8]) -> Vec<u8>) -> bool;

    /// Rewrites entries in `[lower, upper)` with one cursor pass; `f` returns
    /// `None` to leave an entry unchanged. Returns the number rewritten.
    fn update_range(&mut self, lower: &[u8], upper: Option<&[u8]>, f: &mut RewriteFn<'_>) -> usize;

    /// Visible entries with `lower <= key < upper` in ascending order.
    fn range_scan<'a>(&'a self, lower: &[u8], upper: Option<&[u8]>) -> Scan<'a>;

    /// Loads unsorted entries; a duplicate key keeps its last occurrence.
    fn bulk_load(&mut self, entries: &mut dyn Iterator<Item = Entry>);

    fn compact(&mut self) -> Result<()>;

    fn is_empty(&self) -> bool;

    fn counters(&self) -> MetricsCounters;

    fn space(&self) -> SpaceReport;

    fn stats(&self) -> StoreStats {
        StoreStats {
            counters: self.counters(),
            space: self.space(),
        }
    }

    fn reset_counters(&mut self);
}

/// A store of either backend.
pub enum Store {
    BTree(BTree),
    Lsm(Lsm),
}

impl Store {
    pub fn new(config: StoreConfig, pool: &SharedPool) -> Self {
        assert!(
            config.page_size >= MIN_PAGE_SIZE,
            "page size must be at least {MIN_PAGE_SIZE} bytes"
        );
        match config.backend {
            Backend::BTree => Store::BTree(BTree::new(config.page_size, pool.clone())),
            Backend::Lsm => Store::Lsm(Lsm::new(
                config.page_size,
                config.memtable_bytes,
                config.max_runs,
                pool.clone(),
            )),
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            Store::BTree(_) => Backend::BTree,
            Store::Lsm(_) => Backend::Lsm,
        }
    }

    /// Full scan of every visible entry.
    pub fn scan_all(&self) -> Scan<'_> {
        self.range_scan(&[], None)
    }

    /// Scan of every key starting with `prefix`.
    pub fn scan_prefix(&self, prefix: &[u8]) -> Scan<'_> {
        let upper = crate::encoding::prefix_successor(prefix);
        self.range_scan(prefix, upper.as_deref())
    }

    /// Scans `prefix`, or everything when it is `None`.
    pub fn scan_within(&self, prefix: Option<&[u8]>) -> Scan<'_> {
        match prefix {
            Some(p) => self.scan_prefix(p),
            None => self.scan_all(),
        }
    }

    fn inner(&self) -> &dyn OrderedStore {
        match self {
            Store::BTree(t) => t,
            Store::Lsm(l) => l,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn OrderedStore {
        match self {
            Store::BTree(t) => t,
            Store::Lsm(l) => l,
        }
    }
}

impl OrderedStore for Store {
    fn put(&mut self, key: &[u8], value: &[u8]) {
        self.inner_mut().put(key, value)
    }

    fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.inner().get(key)
    }

    fn delete(&mut self, key: &[u8]) -> DeleteOutcome {
        self.inner_mut().delete(key)
    }

    fn update(&mut self, key: &[u8], f: &mut dyn FnMut(&[u8]) -> Vec<u8>) -> bool {
        self.inner_mut().update(key, f)
    }

    fn update_range(&mut self, lower: &[u8], upper: Option<&[u8]>, f: &mut RewriteFn<'_>) -> usize {
        self.inner_mut().update_range(lower, upper, f)
    }

    fn range_scan<'a>(&'a self, lower: &[u8], upper: Option<&[u8]>) -> Scan<'a> {
        self.inner().range_scan(lower, upper)
    }

    fn bulk_load(&mut self, entries: &mut dyn Iterator<Item = Entry>) {
        self.inner_mut().bulk_load(entries)
    }

    fn compact(&mut self) -> Result<()> {
        self.inner_mut().compact()
    }

    fn is_empty(&self) -> bool {
        self.inner().is_empty()
    }

    fn counters(&self) -> MetricsCounters {
        self.inner().counters()
    }

    fn space(&self) -> SpaceReport {
        self.inner().space()
    }

    fn reset_counters(&mut self) {
        self.inner_mut().reset_counters()
    }
}

pub(crate) fn unsupported_compaction() -> Error {
    Error::Unsupported("compaction applies to the lsm backend only".into())
}

/// Counts comparisons of a binary search for the first index whose key is
/// `>= key` (`Ok` when equal).
pub(crate) fn search_by<T>(
    items: &[T],
    key: &[u8],
    get: impl Fn(&T) -> &[u8],
    comparisons: &mut u64,
) -> std::result::Result<usize, usize> {
    let mut lo = 0usize;
    let mut hi = items.len();
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        *comparisons += 1;
        match get(&items[mid]).cmp(key) {
            std::cmp::Ordering::Less => lo = mid + 1,
            std::cmp::Ordering::Greater => hi = mid,
            std::cmp::Ordering::Equal => return Ok(mid),
        }
    }
    Err(lo)
}
