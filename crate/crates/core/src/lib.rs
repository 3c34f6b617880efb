//! Merged indexes for stock/orderline joins.
//!
//! A merged index keeps the rows of two tables in one ordered store,
//! interleaved by their shared join key, so a join is a single ordered scan
//! and each base-table change is a single store mutation. The crate also
//! provides the structures it is measured against (twin single-table
//! indexes with a merge join, and an incrementally maintained materialized
//! join view), a paged b-tree and an LSM forest behind a simulated buffer
//! pool, a TPC-C style workload generator, and a brute-force oracle.
//!
//! ```
//! use mergeidx::{
//!     BufferPool, IncludedColumns, JoinKey, JoinType, MergedIndex, Record, StoreConfig,
//!     Backend, workload::sample,
//! };
//!
//! let pool = BufferPool::shared(64);
//! let mut index = MergedIndex::new(StoreConfig::new(Backend::BTree), &pool, IncludedColumns::Covering);
//! let db = sample::four_rows();
//! index.bulk_load_merged(db.stock, db.orderlines).unwrap();
//! let rows = index.point_join(JoinKey::new(1, 2), JoinType::Inner).unwrap();
//! assert_eq!(rows.len(), 2);
//! ```

pub mod baselines;
pub mod delta;
pub mod encoding;
pub mod error;
pub mod join;
pub mod merged_index;
pub mod oracle;
pub mod store;
pub mod structure;
pub mod workload;

pub use baselines::{MaterializedJoinView, TraditionalIndexes};
pub use delta::{Delta, DeltaKind};
pub use encoding::{
    EncodedKey, EncodedRecord, IncludedColumns, JoinKey, OrderlineKey, OrderlinePk,
    OrderlineRecord, Record, RecordKey, SourceTag, StockRecord,
};
pub use error::{EncodingError, Error, Result};
pub use join::{JoinRow, JoinStream, JoinType, Scope};
pub use merged_index::MergedIndex;
pub use oracle::ShadowDb;
pub use store::{
    Backend, BufferPool, MetricsCounters, OrderedStore, SharedPool, SpaceReport, Store, StoreConfig,
};
pub use structure::{Structure, StructureKind};
pub use workload::{Database, WorkloadConfig};
