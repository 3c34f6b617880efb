//! The three compared structures behind one interface.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::baselines::{MaterializedJoinView, TraditionalIndexes};
use crate::delta::Delta;
use crate::encoding::{IncludedColumns, JoinKey, StockRecord};
use crate::error::Result;
use crate::join::{JoinStream, JoinType, Scope};
use crate::merged_index::MergedIndex;
use crate::store::{
    Backend, MetricsCounters, OrderedStore, SharedPool, SpaceReport, Store, StoreConfig,
};
use crate::workload::Database;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Merged,
    Traditional,
    Matview,
}

impl StructureKind {
    pub const ALL: [StructureKind; 3] = [
        StructureKind::Merged,
        StructureKind::Traditional,
        StructureKind::Matview,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureKind::Merged => "merged",
            StructureKind::Traditional => "traditional",
            StructureKind::Matview => "matview",
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StructureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        StructureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown structure `{s}`"))
    }
}

#[allow(clippy::large_enum_variant)] // one instance per experiment
pub enum Structure {
    Merged(MergedIndex),
    Traditional(TraditionalIndexes),
    Matview(MaterializedJoinView),
}

impl Structure {
    /// `view_join` is the join type a materialized view stores; the other
    /// structures ignore it.
    pub fn new(
        kind: StructureKind,
        config: StoreConfig,
        pool: &SharedPool,
        policy: IncludedColumns,
        view_join: JoinType,
    ) -> Result<Self> {
        Ok(match kind {
            StructureKind::Merged => Structure::Merged(MergedIndex::new(config, pool, policy)),
            StructureKind::Traditional => {
                Structure::Traditional(TraditionalIndexes::new(config, pool, policy))
            }
            StructureKind::Matview => {
                Structure::Matview(MaterializedJoinView::new(config, pool, policy, view_join)?)
            }
        })
    }

    pub fn kind(&self) -> StructureKind {
        match self {
            Structure::Merged(_) => StructureKind::Merged,
            Structure::Traditional(_) => StructureKind::Traditional,
            Structure::Matview(_) => StructureKind::Matview,
        }
    }

    pub fn backend(&self) -> Backend {
        self.stores()[0].backend()
    }

    pub fn bulk_load(&mut self, db: &Database) -> Result<()> {
        let stock = db.stock.iter().cloned();
        let orderlines = db.orderlines.iter().cloned();
        match self {
            Structure::Merged(m) => m.bulk_load_merged(stock, orderlines),
            Structure::Traditional(t) => t.bulk_load(stock, orderlines),
            Structure::Matview(v) => v.bulk_load(stock, orderlines),
        }
    }

    pub fn apply(&mut self, delta: &Delta) -> Result<()> {
        match self {
            Structure::Merged(m) => m.apply(delta),
            Structure::Traditional(t) => t.maintain(delta),
            Structure::Matview(v) => v.apply(delta),
        }
    }

    pub fn read_stock(&self, key: JoinKey) -> Result<Option<StockRecord>> {
        match self {
            Structure::Merged(m) => m.read_stock(key),
            Structure::Traditional(t) => t.read_stock(key),
            Structure::Matview(v) => v.read_stock(key),
        }
    }

    pub fn can_answer(&self, jt: JoinType) -> bool {
        match self {
            Structure::Matview(v) => v.can_answer(jt),
            _ => true,
        }
    }

    pub fn join(&self, jt: JoinType, scope: Scope) -> Result<JoinStream<'_>> {
        match self {
            Structure::Merged(m) => match scope {
                Scope::Point(k) => m.point_join_stream(k, jt),
                Scope::Warehouse(w) => m.range_join(w, jt),
                Scope::All => Ok(m.full_join(jt)),
            },
            Structure::Traditional(t) => t.merge_join(jt, scope),
            Structure::Matview(v) => v.query_view(jt, scope),
        }
    }

    /// Every store the structure owns, view first for a materialized view.
    pub fn stores(&self) -> Vec<&Store> {
        match self {
            Structure::Merged(m) => vec![m.store()],
            Structure::Traditional(t) => vec![t.stock_store(), t.orderline_store()],
            Structure::Matview(v) => vec![
                v.view_store(),
                v.support().stock_store(),
                v.support().orderline_store(),
            ],
        }
    }

    fn stores_mut(&mut self) -> Vec<&mut Store> {
        match self {
            Structure::Merged(m) => vec![m.store_mut()],
            Structure::Traditional(t) => t.stores_mut().into_iter().collect(),
            Structure::Matview(v) => v.stores_mut().into_iter().collect(),
        }
    }

    /// Merges LSM runs down to one; a no-op on the b-tree.
    pub fn compact(&mut self) -> Result<()> {
        if self.backend() == Backend::Lsm {
            for store in self.stores_mut() {
                store.compact()?;
            }
        }
        Ok(())
    }

    /// Scans every store once so the buffer pool holds the hot pages.
    pub fn warm(&self) -> usize {
        self.stores().iter().map(|s| s.scan_all().count()).sum()
    }

    pub fn counters(&self) -> MetricsCounters {
        self.stores()
            .iter()
            .fold(MetricsCounters::default(), |acc, s| acc + s.counters())
    }

    pub fn reset_counters(&mut self) {
        for store in self.stores_mut() {
            store.reset_counters();
        }
    }

    /// Space of the structure answering queries: the merged index, both
    /// single-table indexes, or the view alone.
    pub fn primary_space(&self) -> SpaceReport {
        match self {
            Structure::Merged(m) => m.space(),
            Structure::Traditional(t) => t.space(),
            Structure::Matview(v) => v.view_space(),
        }
    }

    /// Indexes kept only to maintain a view.
    pub fn support_space(&self) -> SpaceReport {
        match self {
            Structure::Matview(v) => v.support_space(),
            _ => SpaceReport::default(),
        }
    }
}
