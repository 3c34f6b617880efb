//! Index-organized materialized join view with immediate incremental
//! maintenance.
//!
//! View key: `join_key | presence | [district_id, order_id, line_number]`.
//! Presence 0 is a stock row padded for a missing orderline side (no
//! remainder), 1 a matched row, 2 an orderline row padded for a missing
//! stock side. Matched payloads are the stock payload followed by the
//! orderline payload, so stock columns are repeated once per match.

use std::cell::Cell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::baselines::traditional::TraditionalIndexes;
use crate::delta::Delta;
use crate::encoding::{
    decode_orderline, decode_stock, decode_stock_prefix, join_key_bytes, orderline_payload,
    stock_payload, IncludedColumns, JoinKey, OrderlineKey, OrderlineRecord, Record, RecordKey,
    StockRecord,
};
use crate::error::{EncodingError, Error, Result};
use crate::join::{JoinRow, JoinStream, JoinType, Scope};
use crate::store::{
    DeleteOutcome, Entry, MetricsCounters, OrderedStore, SharedPool, SpaceReport, Store,
    StoreConfig,
};

const STOCK_PADDED: u8 = 0;
const MATCHED: u8 = 1;
const ORDERLINE_PADDED: u8 = 2;

fn view_key(key: JoinKey, presence: u8, remainder: Option<[u32; 3]>) -> Result<Vec<u8>> {
    let mut out = join_key_bytes(key)?.into_bytes();
    out.push(presence);
    if let Some(rest) = remainder {
        for (n, id) in rest.into_iter().enumerate() {
            if id == 0 {
                return Err(EncodingError::OutOfRange {
                    index: 3 + n,
                    reason: "ids start at 1".into(),
                }
                .into());
            }
            out.extend_from_slice(&id.to_be_bytes());
        }
    }
    Ok(out)
}

fn matched_key(o: &OrderlineRecord) -> Result<Vec<u8>> {
    view_key(o.join_key(), MATCHED, Some(o.key().remainder()))
}

fn orderline_padded_key(o: &OrderlineRecord) -> Result<Vec<u8>> {
    view_key(o.join_key(), ORDERLINE_PADDED, Some(o.key().remainder()))
}

fn stock_padded_key(key: JoinKey) -> Result<Vec<u8>> {
    view_key(key, STOCK_PADDED, None)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, EncodingError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(EncodingError::Truncated(at))
}

fn decode_view_row(key: &[u8], value: &[u8], policy: IncludedColumns) -> Result<JoinRow> {
    let jk = JoinKey::new(read_u32(key, 0)?, read_u32(key, 4)?);
    let presence = *key.get(8).ok_or(EncodingError::Truncated(8))?;
    let ol_key = |key: &[u8]| -> Result<OrderlineKey, EncodingError> {
        if key.len() != 21 {
            return Err(EncodingError::Truncated(key.len()));
        }
        Ok(OrderlineKey {
            warehouse_id: jk.warehouse_id,
            item_id: jk.item_id,
            district_id: read_u32(key, 9)?,
            order_id: read_u32(key, 13)?,
            line_number: read_u32(key, 17)?,
        })
    };
    Ok(match presence {
        STOCK_PADDED => JoinRow::stock_only(&decode_stock(jk, value, policy)?),
        MATCHED => {
            let (s, used) = decode_stock_prefix(jk, value, policy)?;
            let o = decode_orderline(ol_key(key)?, &value[used..], policy)?;
            JoinRow::pair(&s, &o)
        }
        ORDERLINE_PADDED => {
            JoinRow::orderline_only(&decode_orderline(ol_key(key)?, value, policy)?)
        }
        byte => return Err(EncodingError::InvalidByte { byte, offset: 8 }.into()),
    })
}

/// Keeps the rows of a stored view that a requested join type needs, and
/// reshapes them.
fn derive(stored: JoinType, wanted: JoinType) -> Result<fn(&JoinRow) -> Option<JoinRow>> {
    let f: fn(&JoinRow) -> Option<JoinRow> = match wanted {
        JoinType::Inner => |r| r.is_matched().then(|| r.clone()),
        JoinType::LeftOuter => |r| r.orderline.is_some().then(|| r.clone()),
        JoinType::RightOuter => |r| r.stock.is_some().then(|| r.clone()),
        JoinType::FullOuter => |r| Some(r.clone()),
        JoinType::LeftSemi => |r| {
            r.is_matched()
                .then(|| JoinRow::orderline_only(r.orderline.as_ref().unwrap()))
        },
        // deduplicated by the caller
        JoinType::RightSemi => |r| {
            r.is_matched()
                .then(|| JoinRow::stock_only(r.stock.as_ref().unwrap()))
        },
    };
    let derivable = match stored {
        JoinType::FullOuter => true,
        JoinType::Inner => matches!(
            wanted,
            JoinType::Inner | JoinType::LeftSemi | JoinType::RightSemi
        ),
        _ => false,
    };
    if derivable {
        Ok(f)
    } else {
        Err(Error::Unsupported(format!(
            "a {stored} view cannot answer a {wanted} join"
        )))
    }
}

pub struct MaterializedJoinView {
    view: Store,
    support: TraditionalIndexes,
    stored: JoinType,
    policy: IncludedColumns,
}

impl MaterializedJoinView {
    /// `stored` must be `Inner` or `FullOuter`.
    pub fn new(
        config: StoreConfig,
        pool: &SharedPool,
        policy: IncludedColumns,
        stored: JoinType,
    ) -> Result<Self> {
        if !matches!(stored, JoinType::Inner | JoinType::FullOuter) {
            return Err(Error::Unsupported(format!("cannot store a {stored} view")));
        }
        Ok(MaterializedJoinView {
            view: Store::new(config, pool),
            support: TraditionalIndexes::new(config, pool, policy),
            stored,
            policy,
        })
    }

    pub fn stored_join(&self) -> JoinType {
        self.stored
    }

    pub fn view_store(&self) -> &Store {
        &self.view
    }

    pub fn support(&self) -> &TraditionalIndexes {
        &self.support
    }

    pub fn can_answer(&self, jt: JoinType) -> bool {
        derive(self.stored, jt).is_ok()
    }

    fn outer(&self) -> bool {
        self.stored == JoinType::FullOuter
    }

    fn matched_payload(&self, s: &StockRecord, o: &OrderlineRecord) -> Vec<u8> {
        let mut v = stock_payload(s, self.policy);
        v.extend(orderline_payload(o, self.policy));
        v
    }

    /// One range scan of the view; rows are decoded, never recomputed.
    pub fn query_view(&self, jt: JoinType, scope: Scope) -> Result<JoinStream<'_>> {
        let keep = derive(self.stored, jt)?;
        let prefix = scope.prefix()?;
        let scan = self.view.scan_within(prefix.as_ref().map(|p| p.as_bytes()));
        let policy = self.policy;
        let mut last_stock: Option<JoinKey> = None;
        let rows = scan.filter_map(move |(k, v)| {
            let row = match decode_view_row(&k, &v, policy) {
                Ok(row) => row,
                Err(e) => return Some(Err(e)),
            };
            let out = keep(&row)?;
            if jt == JoinType::RightSemi {
                if last_stock == Some(out.key) {
                    return None;
                }
                last_stock = Some(out.key);
            }
            Some(Ok(out))
        });
        Ok(JoinStream::new(Box::new(rows), Rc::new(Cell::new(0))))
    }

    /// Applies one base-table change to the support indexes and the view.
    pub fn apply(&mut self, delta: &Delta) -> Result<()> {
        delta.validate()?;
        match delta {
            Delta::Insert(Record::Orderline(o)) => self.insert_orderline(o),
            Delta::Insert(Record::Stock(s)) => self.insert_stock(s),
            Delta::Delete(Record::Orderline(o)) => self.delete_orderline(o),
            Delta::Delete(Record::Stock(s)) => self.delete_stock(s),
            Delta::Update { old, new } if old.key() != new.key() => {
                self.apply(&Delta::Delete(old.clone()))?;
                self.apply(&Delta::Insert(new.clone()))
            }
            Delta::Update {
                new: Record::Orderline(o),
                ..
            } => self.update_orderline(o),
            Delta::Update {
                new: Record::Stock(s),
                ..
            } => self.update_stock(s),
        }
    }

    fn insert_orderline(&mut self, o: &OrderlineRecord) -> Result<()> {
        self.support.insert(&Record::Orderline(o.clone()))?;
        match self.support.read_stock(o.join_key())? {
            Some(s) => {
                let value = self.matched_payload(&s, o);
                self.view.put(&matched_key(o)?, &value);
                if self.outer() {
                    self.view.delete(&stock_padded_key(s.key())?);
                }
            }
            None if self.outer() => {
                self.view.put(
                    &orderline_padded_key(o)?,
                    &orderline_payload(o, self.policy),
                );
            }
            None => {}
        }
        Ok(())
    }

    fn delete_orderline(&mut self, o: &OrderlineRecord) -> Result<()> {
        self.support.delete(&RecordKey::Orderline(o.key()))?;
        match self.support.read_stock(o.join_key())? {
            Some(s) => {
                self.remove_view_row(&matched_key(o)?)?;
                if self.outer() && self.support.orderlines_of(s.key())?.is_empty() {
                    self.view
                        .put(&stock_padded_key(s.key())?, &stock_payload(&s, self.policy));
                }
            }
            None if self.outer() => self.remove_view_row(&orderline_padded_key(o)?)?,
            None => {}
        }
        Ok(())
    }

    fn update_orderline(&mut self, o: &OrderlineRecord) -> Result<()> {
        self.support.update(
            &RecordKey::Orderline(o.key()),
            &Record::Orderline(o.clone()),
        )?;
        let (key, value) = match self.support.read_stock(o.join_key())? {
            Some(s) => (matched_key(o)?, self.matched_payload(&s, o)),
            None if self.outer() => (orderline_padded_key(o)?, orderline_payload(o, self.policy)),
            None => return Ok(()),
        };
        if self.view.update(&key, &mut |_| value.clone()) {
            Ok(())
        } else {
            Err(Error::Integrity(format!(
                "view row for {:?} is missing",
                o.key()
            )))
        }
    }

    fn insert_stock(&mut self, s: &StockRecord) -> Result<()> {
        self.support.insert(&Record::Stock(s.clone()))?;
        let matches = self.support.orderlines_of(s.key())?;
        if matches.is_empty() {
            if self.outer() {
                self.view
                    .put(&stock_padded_key(s.key())?, &stock_payload(s, self.policy));
            }
            return Ok(());
        }
        for o in &matches {
            if self.outer() {
                self.view.delete(&orderline_padded_key(o)?);
            }
            let value = self.matched_payload(s, o);
            self.view.put(&matched_key(o)?, &value);
        }
        Ok(())
    }

    fn delete_stock(&mut self, s: &StockRecord) -> Result<()> {
        self.support.delete(&RecordKey::Stock(s.key()))?;
        let matches = self.support.orderlines_of(s.key())?;
        if matches.is_empty() && self.outer() {
            return self.remove_view_row(&stock_padded_key(s.key())?);
        }
        for o in &matches {
            self.remove_view_row(&matched_key(o)?)?;
            if self.outer() {
                self.view.put(
                    &orderline_padded_key(o)?,
                    &orderline_payload(o, self.policy),
                );
            }
        }
        Ok(())
    }

    /// Rewrites the stock part of every view row of the key in one pass.
    fn update_stock(&mut self, s: &StockRecord) -> Result<()> {
        self.support
            .update(&RecordKey::Stock(s.key()), &Record::Stock(s.clone()))?;
        let expected = match self.support.orderlines_of(s.key())?.len() {
            0 if self.outer() => 1,
            m => m,
        };
        if expected == 0 {
            return Ok(());
        }
        let prefix = join_key_bytes(s.key())?.into_bytes();
        let upper = crate::encoding::prefix_successor(&prefix);
        let policy = self.policy;
        let fresh = stock_payload(s, policy);
        let key = s.key();
        let mut bad = false;
        let rewritten =
            self.view.update_range(
                &prefix,
                upper.as_deref(),
                &mut |k, v| match k.get(8).copied() {
                    Some(STOCK_PADDED) => Some(fresh.clone()),
                    Some(MATCHED) => match decode_stock_prefix(key, v, policy) {
                        Ok((_, used)) => {
                            let mut out = fresh.clone();
                            out.extend_from_slice(&v[used..]);
                            Some(out)
                        }
                        Err(_) => {
                            bad = true;
                            None
                        }
                    },
                    _ => None,
                },
            );
        if bad || rewritten != expected {
            return Err(Error::Integrity(format!(
                "expected {expected} view rows for {key:?}, rewrote {rewritten}"
            )));
        }
        Ok(())
    }

    fn remove_view_row(&mut self, key: &[u8]) -> Result<()> {
        match self.view.delete(key) {
            DeleteOutcome::Absent => Err(Error::Integrity(format!(
                "view row {key:02x?} expected but absent"
            ))),
            _ => Ok(()),
        }
    }

    /// Loads the support indexes and the precomputed view.
    pub fn bulk_load(
        &mut self,
        stock: impl IntoIterator<Item = StockRecord>,
        orderlines: impl IntoIterator<Item = OrderlineRecord>,
    ) -> Result<()> {
        let stock: Vec<StockRecord> = stock.into_iter().collect();
        let orderlines: Vec<OrderlineRecord> = orderlines.into_iter().collect();
        let by_key: HashMap<JoinKey, &StockRecord> = stock.iter().map(|s| (s.key(), s)).collect();
        let mut matched: HashMap<JoinKey, bool> = HashMap::new();
        let mut entries: Vec<Entry> = Vec::new();
        for o in &orderlines {
            match by_key.get(&o.join_key()) {
                Some(s) => {
                    matched.insert(s.key(), true);
                    entries.push((matched_key(o)?, self.matched_payload(s, o)));
                }
                None if self.outer() => {
                    entries.push((orderline_padded_key(o)?, orderline_payload(o, self.policy)));
                }
                None => {}
            }
        }
        if self.outer() {
            for s in stock.iter().filter(|s| !matched.contains_key(&s.key())) {
                entries.push((stock_padded_key(s.key())?, stock_payload(s, self.policy)));
            }
        }
        self.view.bulk_load(&mut entries.into_iter());
        self.support.bulk_load(stock, orderlines)
    }

    pub fn compact(&mut self) -> Result<()> {
        self.view.compact()?;
        self.support.compact()
    }

    /// View and support-index counters together.
    pub fn counters(&self) -> MetricsCounters {
        self.view.counters() + self.support.counters()
    }

    pub fn view_space(&self) -> SpaceReport {
        self.view.space()
    }

    pub fn support_space(&self) -> SpaceReport {
        self.support.space()
    }

    pub fn reset_counters(&mut self) {
        self.view.reset_counters();
        self.support.reset_counters();
    }

    pub(crate) fn stores_mut(&mut self) -> [&mut Store; 3] {
        let [a, b] = self.support.stores_mut();
        [&mut self.view, a, b]
    }

    pub(crate) fn read_stock(&self, key: JoinKey) -> Result<Option<StockRecord>> {
        self.support.read_stock(key)
    }
}
