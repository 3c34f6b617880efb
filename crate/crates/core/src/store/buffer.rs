//! Simulated LRU buffer pool. Pages are never materialized; the pool only
//! decides hits, misses and dirty write-backs so that access metrics are
//! deterministic.

use std::cell::RefCell;
use std::num::NonZeroUsize;
use std::rc::Rc;

use lru::LruCache;
use serde::{Deserialize, Serialize};

pub type SharedPool = Rc<RefCell<BufferPool>>;

/// Store-qualified page number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PageId {
    pub store: u32,
    pub page: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolStats {
    pub logical_reads: u64,
    pub logical_writes: u64,
    pub misses: u64,
    pub writebacks: u64,
    pub resident: usize,
    pub capacity: usize,
}

pub struct BufferPool {
    cache: LruCache<PageId, bool>,
    capacity: usize,
    logical_reads: u64,
    logical_writes: u64,
    misses: u64,
    writebacks: Vec<u64>,
}

impl BufferPool {
    pub fn new(capacity_pages: usize) -> Self {
        let capacity = capacity_pages.max(1);
        BufferPool {
            cache: LruCache::new(NonZeroUsize::new(capacity).unwrap()),
            capacity,
            logical_reads: 0,
            logical_writes: 0,
            misses: 0,
            writebacks: Vec::new(),
        }
    }

    pub fn shared(capacity_pages: usize) -> SharedPool {
        Rc::new(RefCell::new(BufferPool::new(capacity_pages)))
    }

    /// Hands out a store id used to qualify page numbers.
    pub fn register_store(&mut self) -> u32 {
        self.writebacks.push(0);
        (self.writebacks.len() - 1) as u32
    }

    /// Pins `page` for reading; returns `true` on a miss.
    pub fn read(&mut self, page: PageId) -> bool {
        self.logical_reads += 1;
        self.touch(page, false)
    }

    /// Pins `page` for modification; returns `true` on a miss.
    pub fn write(&mut self, page: PageId) -> bool {
        self.logical_writes += 1;
        self.touch(page, true)
    }

    /// Places a freshly allocated page in the pool without reading it.
    pub fn install(&mut self, page: PageId) {
        self.logical_writes += 1;
        if let Some(dirty) = self.cache.get_mut(&page) {
            *dirty = true;
            return;
        }
        self.insert(page, true);
    }

    /// Drops a freed page without writing it back.
    pub fn discard(&mut self, page: PageId) {
        self.cache.pop(&page);
    }

    fn touch(&mut self, page: PageId, dirty: bool) -> bool {
        if let Some(d) = self.cache.get_mut(&page) {
            *d |= dirty;
            return false;
        }
        self.misses += 1;
        self.insert(page, dirty);
        true
    }

    fn insert(&mut self, page: PageId, dirty: bool) {
        if let Some((victim, was_dirty)) = self.cache.push(page, dirty) {
            if victim != page && was_dirty {
                self.writebacks[victim.store as usize] += 1;
            }
        }
    }

    pub fn writebacks(&self, store: u32) -> u64 {
        self.writebacks.get(store as usize).copied().unwrap_or(0)
    }

    pub fn reset_writebacks(&mut self, store: u32) {
        if let Some(w) = self.writebacks.get_mut(store as usize) {
            *w = 0;
        }
    }

    pub fn resident(&self) -> usize {
        self.cache.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn stats(&self) -> PoolStats {
        PoolStats {
            logical_reads: self.logical_reads,
            logical_writes: self.logical_writes,
            misses: self.misses,
            writebacks: self.writebacks.iter().sum(),
            resident: self.cache.len(),
            capacity: self.capacity,
        }
    }

    pub fn reset_stats(&mut self) {
        self.logical_reads = 0;
        self.logical_writes = 0;
        self.misses = 0;
        self.writebacks.iter_mut().for_each(|w| *w = 0);
    }
}
