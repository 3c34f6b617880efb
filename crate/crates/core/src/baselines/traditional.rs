use crate::delta::Delta;
use crate::encoding::{
    decode_orderline, decode_orderline_index_key, decode_stock, decode_stock_index_key,
    join_key_bytes, orderline_index_key, orderline_payload, stock_index_key, stock_payload,
    IncludedColumns, JoinKey, OrderlineKey, OrderlineRecord, Record, RecordKey, SourceTag,
    StockRecord,
};
use crate::error::{Error, Result};
use crate::join::{GroupJoin, JoinStream, JoinType, MergeInputs, Scope};
use crate::store::{
    DeleteOutcome, MetricsCounters, OrderedStore, SharedPool, SpaceReport, Store, StoreConfig,
};

/// The stock primary index plus the orderline secondary index on
/// `(warehouse_id, item_id, district_id, order_id, line_number)`.
pub struct TraditionalIndexes {
    stock: Store,
    orderline: Store,
    policy: IncludedColumns,
}

impl TraditionalIndexes {
    pub fn new(config: StoreConfig, pool: &SharedPool, policy: IncludedColumns) -> Self {
        TraditionalIndexes {
            stock: Store::new(config, pool),
            orderline: Store::new(config, pool),
            policy,
        }
    }

    pub fn policy(&self) -> IncludedColumns {
        self.policy
    }

    pub fn stock_store(&self) -> &Store {
        &self.stock
    }

    pub fn orderline_store(&self) -> &Store {
        &self.orderline
    }

    pub fn stores_mut(&mut self) -> [&mut Store; 2] {
        [&mut self.stock, &mut self.orderline]
    }

    pub fn insert(&mut self, record: &Record) -> Result<()> {
        match record {
            Record::Stock(s) => {
                let key = stock_index_key(s.key())?;
                self.stock
                    .put(key.as_bytes(), &stock_payload(s, self.policy));
            }
            Record::Orderline(o) => {
                let key = orderline_index_key(&o.key())?;
                self.orderline
                    .put(key.as_bytes(), &orderline_payload(o, self.policy));
            }
        }
        Ok(())
    }

    /// Fails with not-found on the b-tree backend; LSM deletes are blind.
    pub fn delete(&mut self, key: &RecordKey) -> Result<()> {
        let outcome = match key {
            RecordKey::Stock(k) => self.stock.delete(stock_index_key(*k)?.as_bytes()),
            RecordKey::Orderline(k) => self.orderline.delete(orderline_index_key(k)?.as_bytes()),
        };
        match outcome {
            DeleteOutcome::Absent => Err(Error::NotFound(*key)),
            DeleteOutcome::Removed | DeleteOutcome::Blind => Ok(()),
        }
    }

    pub fn update(&mut self, key: &RecordKey, new: &Record) -> Result<()> {
        if key.tag() != new.tag() {
            return Err(Error::MalformedDelta(
                "update changes the source table".into(),
            ));
        }
        if *key != new.key() {
            self.delete(key)?;
            return self.insert(new);
        }
        let policy = self.policy;
        let found = match new {
            Record::Stock(s) => {
                let value = stock_payload(s, policy);
                let key = stock_index_key(s.key())?;
                self.stock.update(key.as_bytes(), &mut |_| value.clone())
            }
            Record::Orderline(o) => {
                let value = orderline_payload(o, policy);
                let key = orderline_index_key(&o.key())?;
                self.orderline
                    .update(key.as_bytes(), &mut |_| value.clone())
            }
        };
        if found {
            Ok(())
        } else {
            Err(Error::NotFound(*key))
        }
    }

    /// One mutation in exactly one of the two indexes.
    pub fn maintain(&mut self, delta: &Delta) -> Result<()> {
        delta.validate()?;
        match delta {
            Delta::Insert(r) => self.insert(r),
            Delta::Delete(r) => self.delete(&r.key()),
            Delta::Update { old, new } => self.update(&old.key(), new),
        }
    }

    /// Point lookup in the stock index.
    pub fn read_stock(&self, key: JoinKey) -> Result<Option<StockRecord>> {
        let bytes = stock_index_key(key)?;
        self.stock
            .get(bytes.as_bytes())
            .map(|v| decode_stock(key, &v, self.policy).map_err(Error::from))
            .transpose()
    }

    /// Orderlines referencing `key`, from one prefix scan of the orderline index.
    pub fn orderlines_of(&self, key: JoinKey) -> Result<Vec<OrderlineRecord>> {
        let prefix = join_key_bytes(key)?;
        self.decode_orderlines(self.orderline.scan_prefix(prefix.as_bytes()))
            .collect()
    }

    fn decode_stocks<'a>(
        &'a self,
        scan: crate::store::Scan<'a>,
    ) -> impl Iterator<Item = Result<StockRecord>> + 'a {
        let policy = self.policy;
        scan.map(move |(k, v)| {
            let key = decode_stock_index_key(&k)?;
            Ok(decode_stock(key, &v, policy)?)
        })
    }

    fn decode_orderlines<'a>(
        &'a self,
        scan: crate::store::Scan<'a>,
    ) -> impl Iterator<Item = Result<OrderlineRecord>> + 'a {
        let policy = self.policy;
        scan.map(move |(k, v)| {
            let key: OrderlineKey = decode_orderline_index_key(&k)?;
            Ok(decode_orderline(key, &v, policy)?)
        })
    }

    /// Index-based merge join: one cursor per index, advanced in lockstep
    /// over join-key groups.
    pub fn merge_join(&self, jt: JoinType, scope: Scope) -> Result<JoinStream<'_>> {
        let prefix = scope.prefix()?;
        let prefix = prefix.as_ref().map(|p| p.as_bytes());
        let stocks = self.decode_stocks(self.stock.scan_within(prefix));
        let orderlines = self.decode_orderlines(self.orderline.scan_within(prefix));
        let join = GroupJoin::new(MergeInputs::new(stocks, orderlines), jt);
        let peak = join.peak_handle();
        Ok(JoinStream::new(Box::new(join), peak))
    }

    /// All rows of one table, from its own index.
    pub fn extract_table(&self, tag: SourceTag) -> Box<dyn Iterator<Item = Result<Record>> + '_> {
        match tag {
            SourceTag::Stock => Box::new(
                self.decode_stocks(self.stock.scan_all())
                    .map(|r| r.map(Record::Stock)),
            ),
            SourceTag::Orderline => Box::new(
                self.decode_orderlines(self.orderline.scan_all())
                    .map(|r| r.map(Record::Orderline)),
            ),
        }
    }

    /// Loads each table into its own index.
    pub fn bulk_load(
        &mut self,
        stock: impl IntoIterator<Item = StockRecord>,
        orderlines: impl IntoIterator<Item = OrderlineRecord>,
    ) -> Result<()> {
        let policy = self.policy;
        let stock_entries: Vec<_> = stock
            .into_iter()
            .map(|s| {
                Ok((
                    stock_index_key(s.key())?.into_bytes(),
                    stock_payload(&s, policy),
                ))
            })
            .collect::<Result<_>>()?;
        let orderline_entries: Vec<_> = orderlines
            .into_iter()
            .map(|o| {
                Ok((
                    orderline_index_key(&o.key())?.into_bytes(),
                    orderline_payload(&o, policy),
                ))
            })
            .collect::<Result<_>>()?;
        self.stock.bulk_load(&mut stock_entries.into_iter());
        self.orderline.bulk_load(&mut orderline_entries.into_iter());
        Ok(())
    }

    pub fn compact(&mut self) -> Result<()> {
        self.stock.compact()?;
        self.orderline.compact()
    }

    pub fn counters(&self) -> MetricsCounters {
        self.stock.counters() + self.orderline.counters()
    }

    pub fn space(&self) -> SpaceReport {
        self.stock.space() + self.orderline.space()
    }

    pub fn reset_counters(&mut self) {
        self.stock.reset_counters();
        self.orderline.reset_counters();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::join::JoinRow;
    use crate::store::{Backend, BufferPool};
    use crate::workload::sample;

    fn four_rows() -> TraditionalIndexes {
        let pool = BufferPool::shared(64);
        let mut ti = TraditionalIndexes::new(
            StoreConfig::new(Backend::BTree),
            &pool,
            IncludedColumns::Covering,
        );
        let db = sample::four_rows();
        ti.bulk_load(db.stock, db.orderlines).unwrap();
        ti
    }

    #[test]
    fn point_lookup_opens_one_cursor_per_index() {
        let ti = four_rows();
        let db = sample::four_rows().projected(IncludedColumns::Covering);
        let before = ti.counters().root_to_leaf_traversals;
        let rows: Vec<_> = ti
            .merge_join(JoinType::Inner, Scope::Point(JoinKey::new(1, 2)))
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(ti.counters().root_to_leaf_traversals - before, 2);
        assert_eq!(
            rows,
            vec![
                JoinRow::pair(&db.stock[1], &db.orderlines[2]),
                JoinRow::pair(&db.stock[1], &db.orderlines[3]),
            ]
        );
    }

    #[test]
    fn orderline_insert_leaves_stock_index_alone() {
        let mut ti = four_rows();
        ti.reset_counters();
        let mut ol = sample::four_rows().orderlines[0].clone();
        ol.order_id = 40;
        ti.maintain(&Delta::Insert(Record::Orderline(ol))).unwrap();
        assert_eq!(ti.stock_store().counters().node_accesses(), 0);
        assert_eq!(ti.orderline_store().space().entry_count, 5);
        assert_eq!(ti.counters().mutations, 1);
    }

    #[test]
    fn delete_of_absent_row_is_not_found() {
        let mut ti = four_rows();
        let key = RecordKey::Stock(JoinKey::new(5, 5));
        assert_eq!(ti.delete(&key), Err(Error::NotFound(key)));
    }
}
