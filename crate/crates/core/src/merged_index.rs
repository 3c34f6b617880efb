//! The merged index: one ordered store holding the stock rows and the
//! orderline rows, interleaved by `(warehouse_id, item_id)` with a one-byte
//! source tag that places each stock row ahead of its orderlines.
//!
//! Base-table changes map one-to-one onto store mutations, and every join
//! type is answered by a single ordered scan.

use crate::delta::Delta;
use crate::encoding::{
    decode_merged_key, decode_record, decode_stock, join_key_bytes, merged_record_key, project,
    warehouse_prefix, IncludedColumns, JoinKey, OrderlineRecord, Record, RecordKey, SourceTag,
    StockRecord,
};
use crate::error::{Error, Result};
use crate::join::{GroupJoin, JoinRow, JoinStream, JoinType};
use crate::store::{
    DeleteOutcome, MetricsCounters, OrderedStore, Scan, SharedPool, SpaceReport, Store, StoreConfig,
};

pub struct MergedIndex {
    store: Store,
    policy: IncludedColumns,
}

impl MergedIndex {
    pub fn new(config: StoreConfig, pool: &SharedPool, policy: IncludedColumns) -> Self {
        MergedIndex {
            store: Store::new(config, pool),
            policy,
        }
    }

    pub fn policy(&self) -> IncludedColumns {
        self.policy
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    /// Exactly one store put; the other table is never consulted.
    pub fn insert(&mut self, record: &Record) -> Result<()> {
        let key = merged_record_key(&record.key())?;
        let value = project(record, self.policy);
        self.store.put(key.as_bytes(), value.as_bytes());
        Ok(())
    }

    /// Deleting an absent key leaves the contents unchanged.
    pub fn delete(&mut self, key: &RecordKey) -> Result<DeleteOutcome> {
        let key = merged_record_key(key)?;
        Ok(self.store.delete(key.as_bytes()))
    }

    /// Replaces the payload of an existing entry in one read-modify-write.
    /// A new image with a different key is applied as delete plus insert.
    pub fn update(&mut self, key: &RecordKey, new: &Record) -> Result<()> {
        if key.tag() != new.tag() {
            return Err(Error::MalformedDelta(
                "update changes the source table".into(),
            ));
        }
        if *key != new.key() {
            if self.delete(key)? == DeleteOutcome::Absent {
                return Err(Error::NotFound(*key));
            }
            return self.insert(new);
        }
        let encoded = merged_record_key(key)?;
        let value = project(new, self.policy).into_bytes();
        if self
            .store
            .update(encoded.as_bytes(), &mut |_| value.clone())
        {
            Ok(())
        } else {
            Err(Error::NotFound(*key))
        }
    }

    pub fn apply(&mut self, delta: &Delta) -> Result<()> {
        delta.validate()?;
        match delta {
            Delta::Insert(r) => self.insert(r),
            Delta::Delete(r) => self.delete(&r.key()).map(|_| ()),
            Delta::Update { old, new } => self.update(&old.key(), new),
        }
    }

    /// Point lookup of one stock row.
    pub fn read_stock(&self, key: JoinKey) -> Result<Option<StockRecord>> {
        let encoded = merged_record_key(&RecordKey::Stock(key))?;
        self.store
            .get(encoded.as_bytes())
            .map(|v| decode_stock(key, &v, self.policy).map_err(Error::from))
            .transpose()
    }

    fn decode<'a>(&'a self, scan: Scan<'a>) -> impl Iterator<Item = Result<Record>> + 'a {
        let policy = self.policy;
        scan.map(move |(k, v)| {
            let key = decode_merged_key(&k)?;
            Ok(decode_record(&key, &v, policy)?)
        })
    }

    fn join_over<'a>(&'a self, scan: Scan<'a>, jt: JoinType) -> JoinStream<'a> {
        let join = GroupJoin::new(self.decode(scan), jt);
        let peak = join.peak_handle();
        JoinStream::new(Box::new(join), peak)
    }

    /// Join rows of one key group, from a single range scan.
    pub fn point_join(&self, key: JoinKey, jt: JoinType) -> Result<Vec<JoinRow>> {
        self.point_join_stream(key, jt)?.collect()
    }

    pub fn point_join_stream(&self, key: JoinKey, jt: JoinType) -> Result<JoinStream<'_>> {
        let prefix = join_key_bytes(key)?;
        Ok(self.join_over(self.store.scan_prefix(prefix.as_bytes()), jt))
    }

    /// Join rows of one warehouse, sorted by join key.
    pub fn range_join(&self, warehouse_id: u32, jt: JoinType) -> Result<JoinStream<'_>> {
        let prefix = warehouse_prefix(warehouse_id)?;
        Ok(self.join_over(self.store.scan_prefix(prefix.as_bytes()), jt))
    }

    /// The whole join result from one full scan.
    pub fn full_join(&self, jt: JoinType) -> JoinStream<'_> {
        self.join_over(self.store.scan_all(), jt)
    }

    /// All rows of one table, filtered out of a full scan.
    pub fn extract_table(&self, tag: SourceTag) -> impl Iterator<Item = Result<Record>> + '_ {
        self.decode(self.store.scan_all())
            .filter(move |r| r.as_ref().map_or(true, |r| r.tag() == tag))
    }

    /// Loads both tables in arrival order, without sorting first.
    pub fn bulk_load_merged(
        &mut self,
        stock: impl IntoIterator<Item = StockRecord>,
        orderlines: impl IntoIterator<Item = OrderlineRecord>,
    ) -> Result<()> {
        if !self.store.is_empty() {
            return Err(Error::NotEmpty);
        }
        let policy = self.policy;
        let mut first_error = None;
        let mut entries = stock
            .into_iter()
            .map(Record::Stock)
            .chain(orderlines.into_iter().map(Record::Orderline))
            .filter_map(|r| match merged_record_key(&r.key()) {
                Ok(k) => Some((k.into_bytes(), project(&r, policy).into_bytes())),
                Err(e) => {
                    first_error.get_or_insert(e);
                    None
                }
            });
        self.store.bulk_load(&mut entries);
        match first_error {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    pub fn counters(&self) -> MetricsCounters {
        self.store.counters()
    }

    pub fn space(&self) -> SpaceReport {
        self.store.space()
    }

    pub fn reset_counters(&mut self) {
        self.store.reset_counters();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Backend, BufferPool};
    use crate::workload::sample;

    fn four_rows(backend: Backend) -> MergedIndex {
        let pool = BufferPool::shared(64);
        let mut idx = MergedIndex::new(StoreConfig::new(backend), &pool, IncludedColumns::Covering);
        let db = sample::four_rows();
        for s in &db.stock {
            idx.insert(&Record::Stock(s.clone())).unwrap();
        }
        for o in &db.orderlines {
            idx.insert(&Record::Orderline(o.clone())).unwrap();
        }
        idx
    }

    #[test]
    fn point_join_returns_last_two_rows() {
        for backend in Backend::ALL {
            let idx = four_rows(backend);
            let db = sample::four_rows().projected(IncludedColumns::Covering);
            let rows = idx.point_join(JoinKey::new(1, 2), JoinType::Inner).unwrap();
            assert_eq!(
                rows,
                vec![
                    JoinRow::pair(&db.stock[1], &db.orderlines[2]),
                    JoinRow::pair(&db.stock[1], &db.orderlines[3]),
                ]
            );
            let rows = idx.point_join(JoinKey::new(1, 1), JoinType::Inner).unwrap();
            assert_eq!(
                rows,
                vec![
                    JoinRow::pair(&db.stock[0], &db.orderlines[0]),
                    JoinRow::pair(&db.stock[0], &db.orderlines[1]),
                ]
            );
            assert!(idx
                .point_join(JoinKey::new(9, 9), JoinType::Inner)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn stock_without_orderlines_is_padded_in_full_outer() {
        let mut idx = four_rows(Backend::BTree);
        let mut extra = sample::four_rows().stock[0].clone();
        extra.item_id = 3;
        idx.insert(&Record::Stock(extra.clone())).unwrap();
        let rows = idx
            .point_join(JoinKey::new(1, 3), JoinType::FullOuter)
            .unwrap();
        assert_eq!(
            rows,
            vec![JoinRow::stock_only(
                &extra.projected(IncludedColumns::Covering)
            )]
        );
        assert!(idx
            .point_join(JoinKey::new(1, 3), JoinType::LeftSemi)
            .unwrap()
            .is_empty());
        assert!(idx
            .point_join(JoinKey::new(1, 3), JoinType::RightSemi)
            .unwrap()
            .is_empty());
        assert_eq!(
            idx.point_join(JoinKey::new(1, 3), JoinType::RightOuter)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn insert_costs_one_traversal_and_one_mutation() {
        let mut idx = four_rows(Backend::BTree);
        idx.reset_counters();
        let mut ol = sample::four_rows().orderlines[0].clone();
        ol.line_number = 9;
        idx.insert(&Record::Orderline(ol)).unwrap();
        let c = idx.counters();
        assert_eq!(c.root_to_leaf_traversals, 1);
        assert_eq!(c.mutations, 1);
        assert_eq!(c.searches, 0);
    }

    #[test]
    fn update_of_missing_entry_fails() {
        let mut idx = four_rows(Backend::BTree);
        let mut s = sample::four_rows().stock[0].clone();
        s.item_id = 7;
        let err = idx
            .update(&RecordKey::Stock(s.key()), &Record::Stock(s.clone()))
            .unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }

    #[test]
    fn bulk_load_requires_empty_index() {
        let mut idx = four_rows(Backend::BTree);
        let err = idx.bulk_load_merged(vec![], vec![]).unwrap_err();
        assert_eq!(err, Error::NotEmpty);
    }

    #[test]
    fn extract_filters_by_tag() {
        let idx = four_rows(Backend::Lsm);
        let stocks: Vec<_> = idx
            .extract_table(SourceTag::Stock)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(stocks.len(), 2);
        let lines: Vec<_> = idx
            .extract_table(SourceTag::Orderline)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(lines.len(), 4);
    }
}
