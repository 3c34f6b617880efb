use std::collections::BTreeMap;

use mergeidx::store::{BTree, Entry, MIN_PAGE_SIZE};
use mergeidx::{Backend, BufferPool, OrderedStore, Store, StoreConfig};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Put(u16, Vec<u8>),
    Delete(u16),
    Bulk(Vec<(u16, Vec<u8>)>),
    Compact,
}

fn op() -> impl Strategy<Value = Op> {
    let value = prop::collection::vec(any::<u8>(), 0..48);
    prop_oneof![
        6 => (0u16..400, value.clone()).prop_map(|(k, v)| Op::Put(k, v)),
        3 => (0u16..400).prop_map(Op::Delete),
        1 => prop::collection::vec((0u16..400, value), 0..40).prop_map(Op::Bulk),
        1 => Just(Op::Compact),
    ]
}

fn key(k: u16) -> Vec<u8> {
    k.to_be_bytes().to_vec()
}

fn store(backend: Backend, pool_pages: usize) -> Store {
    let pool = BufferPool::shared(pool_pages);
    Store::new(
        StoreConfig::new(backend)
            .with_page_size(MIN_PAGE_SIZE)
            .with_memtable_bytes(1024),
        &pool,
    )
}

fn apply(s: &mut Store, op: &Op) {
    match op {
        Op::Put(k, v) => s.put(&key(*k), v),
        Op::Delete(k) => {
            s.delete(&key(*k));
        }
        Op::Bulk(batch) => {
            let mut it = batch.iter().map(|(k, v)| (key(*k), v.clone()));
            s.bulk_load(&mut it);
        }
        Op::Compact => {
            let _ = s.compact();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn backends_and_model_agree(ops in prop::collection::vec(op(), 0..300)) {
        let mut model: BTreeMap<Vec<u8>, Vec<u8>> = BTreeMap::new();
        let mut btree = store(Backend::BTree, 16);
        let mut lsm = store(Backend::Lsm, 16);
        for op in &ops {
            match op {
                Op::Put(k, v) => { model.insert(key(*k), v.clone()); }
                Op::Delete(k) => { model.remove(&key(*k)); }
                Op::Bulk(batch) => {
                    for (k, v) in batch { model.insert(key(*k), v.clone()); }
                }
                Op::Compact => {}
            }
            apply(&mut btree, op);
            apply(&mut lsm, op);
        }
        let expected: Vec<Entry> = model.into_iter().collect();
        prop_assert_eq!(btree.scan_all().collect::<Vec<_>>(), expected.clone());
        prop_assert_eq!(lsm.scan_all().collect::<Vec<_>>(), expected.clone());
        prop_assert_eq!(btree.space().entry_count, expected.len() as u64);
        prop_assert_eq!(lsm.space().entry_count, expected.len() as u64);
    }

    #[test]
    fn scans_respect_bounds(ops in prop::collection::vec(op(), 0..200), lo in 0u16..400, hi in 0u16..400) {
        for backend in Backend::ALL {
            let mut s = store(backend, 16);
            let mut model = BTreeMap::new();
            for op in &ops {
                apply(&mut s, op);
                match op {
                    Op::Put(k, v) => { model.insert(*k, v.clone()); }
                    Op::Delete(k) => { model.remove(k); }
                    Op::Bulk(b) => for (k, v) in b { model.insert(*k, v.clone()); },
                    Op::Compact => {}
                }
            }
            let got: Vec<Entry> = s.range_scan(&key(lo), Some(&key(hi))).collect();
            let want: Vec<Entry> = model
                .iter()
                .filter(|(k, _)| lo <= **k && **k < hi)
                .map(|(k, v)| (key(*k), v.clone()))
                .collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn btree_invariants_hold_for_inserts(keys in prop::collection::vec((any::<u32>(), 0usize..200), 1..1500)) {
        let pool = BufferPool::shared(32);
        let mut t = BTree::new(MIN_PAGE_SIZE, pool.clone());
        for (k, len) in &keys {
            t.put(&k.to_be_bytes(), &vec![1; *len]);
        }
        prop_assert!(t.validate(true).is_ok(), "{:?}", t.validate(true));
        let stats = pool.borrow().stats();
        prop_assert!(stats.resident <= stats.capacity);
        prop_assert!(stats.misses <= stats.logical_reads + stats.logical_writes);
    }

    #[test]
    fn btree_stays_valid_under_deletes(keys in prop::collection::vec(0u16..600, 1..1200), drops in prop::collection::vec(0u16..600, 0..1200)) {
        let pool = BufferPool::shared(32);
        let mut t = BTree::new(MIN_PAGE_SIZE, pool);
        for k in &keys {
            t.put(&key(*k), &[9; 30]);
        }
        for k in &drops {
            t.delete(&key(*k));
        }
        prop_assert!(t.validate(false).is_ok(), "{:?}", t.validate(false));
    }
}

#[test]
fn small_pool_misses_grow_with_working_set() {
    let misses = |n: u16| {
        let mut s = store(Backend::BTree, 8);
        for k in 0..n {
            s.put(&key(k), &[0; 40]);
        }
        s.scan_all().count();
        s.reset_counters();
        s.scan_all().count();
        s.counters().buffer_misses
    };
    assert!(misses(4000) > misses(400));
}
