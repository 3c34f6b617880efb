//! Log-structured merge-forest: a byte-bounded memtable spilling into
//! immutable sorted runs, merged by size-tiered compaction.
//!
//! Runs are kept newest first. A freshly flushed run sits in tier 0; once
//! `max_runs` runs share a tier they are merged into one run of the next
//! tier. Tombstones survive a merge unless the merge includes the oldest run.
//! Run pages are written straight to the simulated disk; reads go through the
//! buffer pool. Per-run page fences and key ranges are treated as in-memory
//! metadata.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::iter::Peekable;
use std::ops::Bound;

use super::buffer::{PageId, SharedPool};
use super::{
    search_by, DeleteOutcome, Entry, MetricsCounters, OrderedStore, RewriteFn, Scan, SpaceReport,
};
use crate::error::Result;

const PAGE_HEADER: usize = 16;
/// Key length, value length, tombstone flag.
const RUN_SLOT: usize = 5;
/// Bookkeeping bytes per memtable entry.
const MEM_SLOT: usize = 16;

type Versioned = (Vec<u8>, Option<Vec<u8>>);

fn run_cost(key: &[u8], value: &Option<Vec<u8>>) -> usize {
    key.len() + value.as_ref().map_or(0, |v| v.len()) + RUN_SLOT
}

fn mem_cost(key: &[u8], value: &Option<Vec<u8>>) -> usize {
    key.len() + value.as_ref().map_or(0, |v| v.len()) + MEM_SLOT
}

struct RunPage {
    id: u32,
    entries: Vec<Versioned>,
}

struct Run {
    pages: Vec<RunPage>,
    tier: u32,
}

impl Run {
    fn first_key(&self) -> &[u8] {
        &self.pages[0].entries[0].0
    }

    fn last_key(&self) -> &[u8] {
        &self.pages.last().unwrap().entries.last().unwrap().0
    }

    /// Page that may hold `key`: the last page whose first key is `<= key`.
    fn page_for(&self, key: &[u8], comparisons: &mut u64) -> usize {
        match search_by(&self.pages, key, |p| p.entries[0].0.as_slice(), comparisons) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }
}

pub struct Lsm {
    id: u32,
    pool: SharedPool,
    page_size: usize,
    memtable: BTreeMap<Vec<u8>, Option<Vec<u8>>>,
    mem_bytes: usize,
    memtable_limit: usize,
    max_runs: usize,
    runs: Vec<Run>,
    next_page: u32,
    auto_compact: bool,
    direct_disk_writes: u64,
    counters: RefCell<MetricsCounters>,
}

impl Lsm {
    pub fn new(page_size: usize, memtable_limit: usize, max_runs: usize, pool: SharedPool) -> Self {
        let id = pool.borrow_mut().register_store();
        Lsm {
            id,
            pool,
            page_size,
            memtable: BTreeMap::new(),
            mem_bytes: 0,
            memtable_limit: memtable_limit.max(1),
            max_runs: max_runs.max(2),
            runs: Vec::new(),
            next_page: 0,
            auto_compact: true,
            direct_disk_writes: 0,
            counters: RefCell::new(MetricsCounters::default()),
        }
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    /// Tier of each run, newest first.
    pub fn run_tiers(&self) -> Vec<u32> {
        self.runs.iter().map(|r| r.tier).collect()
    }

    pub fn tombstone_count(&self) -> usize {
        let in_runs: usize = self
            .runs
            .iter()
            .flat_map(|r| r.pages.iter())
            .map(|p| p.entries.iter().filter(|e| e.1.is_none()).count())
            .sum();
        in_runs + self.memtable.values().filter(|v| v.is_none()).count()
    }

    fn page(&self, page: u32) -> PageId {
        PageId {
            store: self.id,
            page,
        }
    }

    fn read_page(&self, page: u32) {
        let miss = self.pool.borrow_mut().read(self.page(page));
        let mut c = self.counters.borrow_mut();
        c.node_reads += 1;
        if miss {
            c.buffer_misses += 1;
        }
    }

    fn mem_insert(&mut self, key: &[u8], value: Option<Vec<u8>>) {
        {
            let mut c = self.counters.borrow_mut();
            c.mutations += 1;
            c.bytes_written += (key.len() + value.as_ref().map_or(0, |v| v.len())) as u64;
        }
        self.mem_bytes += mem_cost(key, &value);
        if let Some(old) = self.memtable.insert(key.to_vec(), value) {
            self.mem_bytes -= mem_cost(key, &old);
        }
        if self.mem_bytes >= self.memtable_limit {
            self.flush();
        }
    }

    /// Spills the memtable into a new tier-0 run.
    fn flush(&mut self) {
        if self.memtable.is_empty() {
            return;
        }
        let entries = std::mem::take(&mut self.memtable);
        self.mem_bytes = 0;
        let run = self.write_run(entries.into_iter(), 0);
        if let Some(run) = run {
            self.runs.insert(0, run);
        }
        if self.auto_compact {
            self.maybe_compact();
        }
    }

    fn write_run(&mut self, entries: impl Iterator<Item = Versioned>, tier: u32) -> Option<Run> {
        let mut pages = Vec::new();
        let mut current: Vec<Versioned> = Vec::new();
        let mut bytes = PAGE_HEADER;
        for (k, v) in entries {
            let cost = run_cost(&k, &v);
            if !current.is_empty() && bytes + cost > self.page_size {
                pages.push(std::mem::take(&mut current));
                bytes = PAGE_HEADER;
            }
            bytes += cost;
            current.push((k, v));
        }
        if !current.is_empty() {
            pages.push(current);
        }
        if pages.is_empty() {
            return None;
        }
        let n = pages.len() as u64;
        {
            let mut c = self.counters.borrow_mut();
            c.node_writes += n;
        }
        self.direct_disk_writes += n;
        let pages = pages
            .into_iter()
            .map(|entries| {
                let id = self.next_page;
                self.next_page += 1;
                RunPage { id, entries }
            })
            .collect();
        Some(Run { pages, tier })
    }

    fn maybe_compact(&mut self) {
        loop {
            let mut target = None;
            let mut i = 0;
            while i < self.runs.len() {
                let tier = self.runs[i].tier;
                let mut j = i;
                while j < self.runs.len() && self.runs[j].tier == tier {
                    j += 1;
                }
                if j - i >= self.max_runs {
                    target = Some((i, j, tier));
                    break;
                }
                i = j;
            }
            match target {
                Some((start, end, tier)) => self.merge_runs(start, end, tier + 1),
                None => return,
            }
        }
    }

    /// Merges runs `start..end` (newest first) into one run of `tier`.
    fn merge_runs(&mut self, start: usize, end: usize, tier: u32) {
        let includes_oldest = end == self.runs.len();
        let sources: Vec<Run> = self.runs.drain(start..end).collect();
        let mut comparisons = 0;
        let mut pages_read = 0u64;
        let mut merged: BTreeMap<Vec<u8>, Option<Vec<u8>>> = BTreeMap::new();
        // oldest first so newer versions overwrite
        for run in sources.iter().rev() {
            for page in &run.pages {
                pages_read += 1;
                for (k, v) in &page.entries {
                    comparisons += 1;
                    merged.insert(k.clone(), v.clone());
                }
            }
        }
        {
            let mut c = self.counters.borrow_mut();
            // compaction streams pages from disk outside the buffer pool
            c.node_reads += pages_read;
            c.buffer_misses += pages_read;
            c.key_comparisons += comparisons;
        }
        {
            let mut pool = self.pool.borrow_mut();
            for run in &sources {
                for page in &run.pages {
                    pool.discard(PageId {
                        store: self.id,
                        page: page.id,
                    });
                }
            }
        }
        let entries = merged
            .into_iter()
            .filter(|(_, v)| !(includes_oldest && v.is_none()));
        if let Some(run) = self.write_run(entries, tier) {
            self.runs.insert(start, run);
        }
    }

    fn lookup(&self, key: &[u8]) -> Option<Option<Vec<u8>>> {
        self.counters.borrow_mut().root_to_leaf_traversals += 1;
        let mut comparisons = (self.memtable.len() as f64 + 1.0).log2().ceil() as u64;
        if let Some(v) = self.memtable.get(key) {
            self.counters.borrow_mut().key_comparisons += comparisons;
            return Some(v.clone());
        }
        let mut found = None;
        for run in &self.runs {
            comparisons += 2;
            if key < run.first_key() || key > run.last_key() {
                continue;
            }
            let p = run.page_for(key, &mut comparisons);
            let page = &run.pages[p];
            self.read_page(page.id);
            if let Ok(i) = search_by(&page.entries, key, |e| e.0.as_slice(), &mut comparisons) {
                found = Some(page.entries[i].1.clone());
                break;
            }
        }
        self.counters.borrow_mut().key_comparisons += comparisons;
        found
    }

    /// Visible contents without touching any counter.
    fn visible_uncounted(&self) -> BTreeMap<&[u8], &[u8]> {
        let mut all: BTreeMap<&[u8], Option<&[u8]>> = BTreeMap::new();
        for run in self.runs.iter().rev() {
            for page in &run.pages {
                for (k, v) in &page.entries {
                    all.insert(k, v.as_deref());
                }
            }
        }
        for (k, v) in &self.memtable {
            all.insert(k, v.as_deref());
        }
        all.into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect()
    }
}

impl OrderedStore for Lsm {
    fn put(&mut self, key: &[u8], value: &[u8]) {
        self.mem_insert(key, Some(value.to_vec()));
    }

    fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.counters.borrow_mut().searches += 1;
        let v = self.lookup(key)??;
        let mut c = self.counters.borrow_mut();
        c.entries_scanned += 1;
        c.bytes_read += (key.len() + v.len()) as u64;
        Some(v)
    }

    fn delete(&mut self, key: &[u8]) -> DeleteOutcome {
        self.mem_insert(key, None);
        DeleteOutcome::Blind
    }

    fn update(&mut self, key: &[u8], f: &mut dyn FnMut(&[u8]) -> Vec<u8>) -> bool {
        let Some(Some(old)) = self.lookup(key) else {
            return false;
        };
        {
            let mut c = self.counters.borrow_mut();
            c.entries_scanned += 1;
            c.bytes_read += (key.len() + old.len()) as u64;
        }
        let new = f(&old);
        self.mem_insert(key, Some(new));
        true
    }

    fn update_range(&mut self, lower: &[u8], upper: Option<&[u8]>, f: &mut RewriteFn<'_>) -> usize {
        let changes: Vec<Entry> = self
            .range_scan(lower, upper)
            .filter_map(|(k, v)| f(&k, &v).map(|n| (k, n)))
            .collect();
        // the scan already counted as the search
        self.counters.borrow_mut().searches -= 1;
        let n = changes.len();
        for (k, v) in changes {
            self.mem_insert(&k, Some(v));
        }
        n
    }

    fn range_scan<'a>(&'a self, lower: &[u8], upper: Option<&[u8]>) -> Scan<'a> {
        {
            let mut c = self.counters.borrow_mut();
            c.searches += 1;
            c.root_to_leaf_traversals += 1;
        }
        if upper.is_some_and(|u| u <= lower) {
            return Box::new(std::iter::empty());
        }
        let upper_bound = match upper {
            Some(u) => Bound::Excluded(u.to_vec()),
            None => Bound::Unbounded,
        };
        let mut sources: Vec<Peekable<Box<dyn Iterator<Item = Versioned> + 'a>>> = Vec::new();
        let mem: Box<dyn Iterator<Item = Versioned> + 'a> = Box::new(
            self.memtable
                .range((Bound::Included(lower.to_vec()), upper_bound))
                .map(|(k, v)| (k.clone(), v.clone())),
        );
        sources.push(mem.peekable());
        for run in &self.runs {
            if upper.is_some_and(|u| run.first_key() >= u) || run.last_key() < lower {
                continue;
            }
            let mut comparisons = 0;
            let page = run.page_for(lower, &mut comparisons);
            self.counters.borrow_mut().key_comparisons += comparisons;
            let cursor: Box<dyn Iterator<Item = Versioned> + 'a> = Box::new(RunCursor {
                lsm: self,
                run,
                page,
                pos: None,
                lower: lower.to_vec(),
                upper: upper.map(|u| u.to_vec()),
            });
            sources.push(cursor.peekable());
        }
        Box::new(MergeCursor { lsm: self, sources })
    }

    fn bulk_load(&mut self, entries: &mut dyn Iterator<Item = Entry>) {
        let previous = self.auto_compact;
        // sorting and merging is left to the next compaction
        self.auto_compact = false;
        for (k, v) in entries {
            self.mem_insert(&k, Some(v));
        }
        self.flush();
        self.auto_compact = previous;
    }

    fn compact(&mut self) -> Result<()> {
        let previous = self.auto_compact;
        self.auto_compact = false;
        self.flush();
        self.auto_compact = previous;
        if self.runs.len() > 1
            || self.runs.iter().any(|r| {
                r.pages
                    .iter()
                    .any(|p| p.entries.iter().any(|e| e.1.is_none()))
            })
        {
            let tier = self.runs.iter().map(|r| r.tier).max().unwrap_or(0);
            let n = self.runs.len();
            self.merge_runs(0, n, tier);
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        self.memtable.values().all(|v| v.is_none())
            && self.runs.iter().all(|r| {
                r.pages
                    .iter()
                    .all(|p| p.entries.iter().all(|e| e.1.is_none()))
            })
    }

    fn counters(&self) -> MetricsCounters {
        let mut c = *self.counters.borrow();
        c.disk_writes = self.pool.borrow().writebacks(self.id) + self.direct_disk_writes;
        c
    }

    fn space(&self) -> SpaceReport {
        let visible = self.visible_uncounted();
        let run_pages: usize = self.runs.iter().map(|r| r.pages.len()).sum();
        let mem_pages = self.mem_bytes.div_ceil(self.page_size);
        SpaceReport {
            entry_count: visible.len() as u64,
            payload_bytes: visible
                .iter()
                .map(|(k, v)| (k.len() + v.len()) as u64)
                .sum(),
            allocated_bytes: ((run_pages + mem_pages) * self.page_size) as u64,
            run_count: self.runs.len() as u64,
        }
    }

    fn reset_counters(&mut self) {
        *self.counters.borrow_mut() = MetricsCounters::default();
        self.direct_disk_writes = 0;
        self.pool.borrow_mut().reset_writebacks(self.id);
    }
}

struct RunCursor<'a> {
    lsm: &'a Lsm,
    run: &'a Run,
    page: usize,
    /// `None` until the current page has been read.
    pos: Option<usize>,
    lower: Vec<u8>,
    upper: Option<Vec<u8>>,
}

impl Iterator for RunCursor<'_> {
    type Item = Versioned;

    fn next(&mut self) -> Option<Versioned> {
        loop {
            let page = self.run.pages.get(self.page)?;
            let pos = match self.pos {
                Some(p) => p,
                None => {
                    self.lsm.read_page(page.id);
                    let mut comparisons = 0;
                    let start = match search_by(
                        &page.entries,
                        &self.lower,
                        |e| e.0.as_slice(),
                        &mut comparisons,
                    ) {
                        Ok(i) | Err(i) => i,
                    };
                    self.lsm.counters.borrow_mut().key_comparisons += comparisons;
                    start
                }
            };
            if pos >= page.entries.len() {
                self.page += 1;
                self.pos = None;
                continue;
            }
            let entry = &page.entries[pos];
            if let Some(u) = &self.upper {
                self.lsm.counters.borrow_mut().key_comparisons += 1;
                if &entry.0 >= u {
                    self.page = self.run.pages.len();
                    return None;
                }
            }
            self.pos = Some(pos + 1);
            return Some(entry.clone());
        }
    }
}

struct MergeCursor<'a> {
    lsm: &'a Lsm,
    /// Newest source first; on equal keys the lowest index wins.
    sources: Vec<Peekable<Box<dyn Iterator<Item = Versioned> + 'a>>>,
}

impl Iterator for MergeCursor<'_> {
    type Item = Entry;

    fn next(&mut self) -> Option<Entry> {
        loop {
            let mut comparisons = 0u64;
            let mut best: Option<(usize, Vec<u8>)> = None;
            for (i, src) in self.sources.iter_mut().enumerate() {
                if let Some((k, _)) = src.peek() {
                    match &best {
                        None => best = Some((i, k.clone())),
                        Some((_, bk)) => {
                            comparisons += 1;
                            if k < bk {
                                best = Some((i, k.clone()));
                            }
                        }
                    }
                }
            }
            let (winner, key) = best?;
            let (_, value) = self.sources[winner].next().unwrap();
            for (i, src) in self.sources.iter_mut().enumerate() {
                if i != winner && src.peek().is_some_and(|(k, _)| *k == key) {
                    comparisons += 1;
                    src.next();
                }
            }
            let mut c = self.lsm.counters.borrow_mut();
            c.key_comparisons += comparisons;
            if let Some(v) = value {
                c.entries_scanned += 1;
                c.bytes_read += (key.len() + v.len()) as u64;
                return Some((key, v));
            }
        }
    }
}
