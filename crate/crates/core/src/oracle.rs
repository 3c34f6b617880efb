//! Brute-force reference: shadow tables and nested-loops joins.
//!
//! Shares only the schema types with the rest of the crate.

use std::collections::BTreeMap;

use crate::delta::Delta;
use crate::encoding::{
    IncludedColumns, JoinKey, OrderlinePk, OrderlineRecord, Record, RecordKey, StockRecord,
};
use crate::error::{Error, Result};
use crate::join::{JoinRow, JoinType};
use crate::workload::Database;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShadowDb {
    pub stock: BTreeMap<JoinKey, StockRecord>,
    pub orderline: BTreeMap<OrderlinePk, OrderlineRecord>,
}

impl ShadowDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_database(db: &Database) -> Self {
        let mut out = ShadowDb::new();
        for s in &db.stock {
            out.stock.insert(s.key(), s.clone());
        }
        for o in &db.orderlines {
            out.orderline.insert(o.pk(), o.clone());
        }
        out
    }

    /// The same rows with only the columns `policy` retains.
    pub fn projected(&self, policy: IncludedColumns) -> ShadowDb {
        ShadowDb {
            stock: self
                .stock
                .iter()
                .map(|(k, s)| (*k, s.projected(policy)))
                .collect(),
            orderline: self
                .orderline
                .iter()
                .map(|(k, o)| (*k, o.projected(policy)))
                .collect(),
        }
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        match key {
            RecordKey::Stock(k) => self.stock.contains_key(k),
            RecordKey::Orderline(k) => self
                .orderline
                .get(&k.pk())
                .is_some_and(|o| o.item_id == k.item_id),
        }
    }

    fn remove(&mut self, record: &Record) -> Result<()> {
        let key = record.key();
        if !self.contains(&key) {
            return Err(Error::NotFound(key));
        }
        match record {
            Record::Stock(s) => {
                self.stock.remove(&s.key());
            }
            Record::Orderline(o) => {
                self.orderline.remove(&o.pk());
            }
        }
        Ok(())
    }

    fn put(&mut self, record: &Record) {
        match record {
            Record::Stock(s) => {
                self.stock.insert(s.key(), s.clone());
            }
            Record::Orderline(o) => {
                self.orderline.insert(o.pk(), o.clone());
            }
        }
    }

    pub fn apply(&mut self, delta: &Delta) -> Result<()> {
        delta.validate()?;
        match delta {
            Delta::Insert(r) => self.put(r),
            Delta::Delete(r) => self.remove(r)?,
            Delta::Update { old, new } => {
                self.remove(old)?;
                self.put(new);
            }
        }
        Ok(())
    }

    /// Compares every orderline with every stock row; rows come back in
    /// canonical order.
    pub fn nested_loops_join(&self, jt: JoinType) -> Vec<JoinRow> {
        let mut rows = Vec::new();
        let mut stock_matched = vec![false; self.stock.len()];
        for o in self.orderline.values() {
            let mut matched = false;
            for (n, s) in self.stock.values().enumerate() {
                if s.warehouse_id != o.warehouse_id || s.item_id != o.item_id {
                    continue;
                }
                stock_matched[n] = true;
                if !matched && jt == JoinType::LeftSemi {
                    rows.push(JoinRow::orderline_only(o));
                }
                matched = true;
                if !matches!(jt, JoinType::LeftSemi | JoinType::RightSemi) {
                    rows.push(JoinRow::pair(s, o));
                }
            }
            if !matched && matches!(jt, JoinType::LeftOuter | JoinType::FullOuter) {
                rows.push(JoinRow::orderline_only(o));
            }
        }
        for (s, matched) in self.stock.values().zip(stock_matched) {
            let keep = match jt {
                JoinType::RightSemi => matched,
                JoinType::RightOuter | JoinType::FullOuter => !matched,
                _ => false,
            };
            if keep {
                rows.push(JoinRow::stock_only(s));
            }
        }
        rows.sort_by_key(|r| r.canonical_key());
        rows
    }
}
