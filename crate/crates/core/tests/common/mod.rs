#![allow(dead_code)]

use mergeidx::join::canonical_sort;
use mergeidx::store::SMALL_BUFFER_PAGES;
use mergeidx::{
    Backend, BufferPool, Database, IncludedColumns, JoinRow, JoinStream, JoinType, Result,
    StoreConfig, Structure, StructureKind, WorkloadConfig,
};

pub fn tiny(seed: u64, so: f64, policy: IncludedColumns) -> WorkloadConfig {
    WorkloadConfig {
        warehouses: 2,
        items_per_warehouse: 8 + (seed % 25) as u32,
        orderlines_per_warehouse: 40 + (seed % 89) as u32,
        so,
        policy,
        seed,
    }
}

/// Page size small enough that tiny databases still span several levels.
pub fn store_config(backend: Backend) -> StoreConfig {
    StoreConfig::new(backend)
        .with_page_size(1024)
        .with_memtable_bytes(4096)
}

pub fn build(
    kind: StructureKind,
    backend: Backend,
    policy: IncludedColumns,
    view_join: JoinType,
    db: &Database,
) -> Structure {
    let pool = BufferPool::shared(SMALL_BUFFER_PAGES);
    let mut s = Structure::new(kind, store_config(backend), &pool, policy, view_join).unwrap();
    s.bulk_load(db).unwrap();
    s
}

pub fn sorted(stream: JoinStream<'_>) -> Vec<JoinRow> {
    let mut rows: Vec<JoinRow> = stream.collect::<Result<_>>().unwrap();
    canonical_sort(&mut rows);
    rows
}
