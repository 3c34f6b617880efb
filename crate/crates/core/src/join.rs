//! Join types, join rows, and the streaming group join shared by the merged
//! index and the index-based merge join.
//!
//! Both producers feed [`GroupJoin`] one record stream ordered by join key,
//! stock rows first within a key. The operator buffers the stock rows of the
//! current key and streams the orderline rows against them, so it never
//! holds more than one key group and never sorts.

use std::cell::Cell;
use std::collections::VecDeque;
use std::fmt;
use std::iter::Peekable;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::encoding::{
    join_key_bytes, warehouse_prefix, EncodedKey, JoinKey, OrderlinePk, OrderlineRecord, Record,
    StockRecord,
};
use crate::error::EncodingError;
use crate::error::Result;

/// "Left" is the orderline side, "right" the stock side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinType {
    Inner,
    LeftOuter,
    RightOuter,
    FullOuter,
    LeftSemi,
    RightSemi,
}

impl JoinType {
    pub const ALL: [JoinType; 6] = [
        JoinType::Inner,
        JoinType::LeftOuter,
        JoinType::RightOuter,
        JoinType::FullOuter,
        JoinType::LeftSemi,
        JoinType::RightSemi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JoinType::Inner => "inner",
            JoinType::LeftOuter => "left_outer",
            JoinType::RightOuter => "right_outer",
            JoinType::FullOuter => "full_outer",
            JoinType::LeftSemi => "left_semi",
            JoinType::RightSemi => "right_semi",
        }
    }

    /// Keeps orderline rows that have no stock match.
    pub fn preserves_orderline(self) -> bool {
        matches!(self, JoinType::LeftOuter | JoinType::FullOuter)
    }

    /// Keeps stock rows that have no orderline match.
    pub fn preserves_stock(self) -> bool {
        matches!(self, JoinType::RightOuter | JoinType::FullOuter)
    }
}

impl fmt::Display for JoinType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for JoinType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        JoinType::ALL
            .into_iter()
            .find(|jt| jt.name() == s)
            .ok_or_else(|| format!("unknown join type `{s}`"))
    }
}

/// One output row; an absent side is outer-join padding or the dropped side
/// of a semi join.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinRow {
    pub key: JoinKey,
    pub orderline: Option<OrderlineRecord>,
    pub stock: Option<StockRecord>,
}

impl JoinRow {
    pub fn pair(stock: &StockRecord, orderline: &OrderlineRecord) -> Self {
        JoinRow {
            key: stock.key(),
            orderline: Some(orderline.clone()),
            stock: Some(stock.clone()),
        }
    }

    pub fn orderline_only(orderline: &OrderlineRecord) -> Self {
        JoinRow {
            key: orderline.join_key(),
            orderline: Some(orderline.clone()),
            stock: None,
        }
    }

    pub fn stock_only(stock: &StockRecord) -> Self {
        JoinRow {
            key: stock.key(),
            orderline: None,
            stock: Some(stock.clone()),
        }
    }

    pub fn is_matched(&self) -> bool {
        self.orderline.is_some() && self.stock.is_some()
    }

    /// Ordering used for multiset comparison: join key, orderline primary key
    /// (absent first), stock presence.
    pub fn canonical_key(&self) -> (JoinKey, Option<OrderlinePk>, bool) {
        (
            self.key,
            self.orderline.as_ref().map(|o| o.pk()),
            self.stock.is_some(),
        )
    }
}

/// A join result stream plus the size of the largest group it had to buffer.
pub struct JoinStream<'a> {
    rows: Box<dyn Iterator<Item = Result<JoinRow>> + 'a>,
    peak: Rc<Cell<usize>>,
}

impl<'a> JoinStream<'a> {
    pub fn new(
        rows: Box<dyn Iterator<Item = Result<JoinRow>> + 'a>,
        peak: Rc<Cell<usize>>,
    ) -> Self {
        JoinStream { rows, peak }
    }

    pub fn empty() -> Self {
        JoinStream::new(Box::new(std::iter::empty()), Rc::new(Cell::new(0)))
    }

    /// Largest number of records buffered at once so far.
    pub fn peak_buffered(&self) -> usize {
        self.peak.get()
    }

    /// Handle that stays readable after the stream is consumed.
    pub fn peak_handle(&self) -> Rc<Cell<usize>> {
        self.peak.clone()
    }
}

impl Iterator for JoinStream<'_> {
    type Item = Result<JoinRow>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rows.next()
    }
}

/// Streaming per-key-group join over a stock-first ordered record stream.
pub struct GroupJoin<I: Iterator<Item = Result<Record>>> {
    input: I,
    jt: JoinType,
    current: Option<JoinKey>,
    stocks: Vec<StockRecord>,
    saw_orderline: bool,
    out: VecDeque<JoinRow>,
    peak: Rc<Cell<usize>>,
    done: bool,
}

impl<I: Iterator<Item = Result<Record>>> GroupJoin<I> {
    pub fn new(input: I, jt: JoinType) -> Self {
        GroupJoin {
            input,
            jt,
            current: None,
            stocks: Vec::new(),
            saw_orderline: false,
            out: VecDeque::new(),
            peak: Rc::new(Cell::new(0)),
            done: false,
        }
    }

    pub fn peak_handle(&self) -> Rc<Cell<usize>> {
        self.peak.clone()
    }

    fn finish_group(&mut self) {
        if !self.saw_orderline && self.jt.preserves_stock() {
            self.out.extend(self.stocks.iter().map(JoinRow::stock_only));
        }
        self.stocks.clear();
        self.saw_orderline = false;
    }

    fn on_orderline(&mut self, o: OrderlineRecord) {
        let first = !self.saw_orderline;
        self.saw_orderline = true;
        match self.jt {
            JoinType::LeftSemi => {
                if !self.stocks.is_empty() {
                    self.out.push_back(JoinRow::orderline_only(&o));
                }
            }
            JoinType::RightSemi => {
                if first {
                    self.out.extend(self.stocks.iter().map(JoinRow::stock_only));
                }
            }
            jt => {
                if self.stocks.is_empty() {
                    if jt.preserves_orderline() {
                        self.out.push_back(JoinRow::orderline_only(&o));
                    }
                } else {
                    self.out
                        .extend(self.stocks.iter().map(|s| JoinRow::pair(s, &o)));
                }
            }
        }
    }
}

impl<I: Iterator<Item = Result<Record>>> Iterator for GroupJoin<I> {
    type Item = Result<JoinRow>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(row) = self.out.pop_front() {
                return Some(Ok(row));
            }
            if self.done {
                return None;
            }
            match self.input.next() {
                None => {
                    self.finish_group();
                    self.done = true;
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(record)) => {
                    let key = record.join_key();
                    if self.current != Some(key) {
                        self.finish_group();
                        self.current = Some(key);
                    }
                    match record {
                        Record::Stock(s) => {
                            debug_assert!(!self.saw_orderline, "stock after orderline in a group");
                            self.stocks.push(s);
                            if self.stocks.len() > self.peak.get() {
                                self.peak.set(self.stocks.len());
                            }
                        }
                        Record::Orderline(o) => self.on_orderline(o),
                    }
                }
            }
        }
    }
}

/// Interleaves a stock stream and an orderline stream, each sorted by join
/// key, into one stock-first stream: the lockstep advance of a merge join.
pub struct MergeInputs<S, O>
where
    S: Iterator<Item = Result<StockRecord>>,
    O: Iterator<Item = Result<OrderlineRecord>>,
{
    stocks: Peekable<S>,
    orderlines: Peekable<O>,
}

impl<S, O> MergeInputs<S, O>
where
    S: Iterator<Item = Result<StockRecord>>,
    O: Iterator<Item = Result<OrderlineRecord>>,
{
    pub fn new(stocks: S, orderlines: O) -> Self {
        MergeInputs {
            stocks: stocks.peekable(),
            orderlines: orderlines.peekable(),
        }
    }
}

impl<S, O> Iterator for MergeInputs<S, O>
where
    S: Iterator<Item = Result<StockRecord>>,
    O: Iterator<Item = Result<OrderlineRecord>>,
{
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Result<Record>> {
        let take_stock = match (self.stocks.peek(), self.orderlines.peek()) {
            (None, None) => return None,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(Err(_)), _) => true,
            (_, Some(Err(_))) => false,
            (Some(Ok(s)), Some(Ok(o))) => s.key() <= o.join_key(),
        };
        if take_stock {
            self.stocks.next().map(|r| r.map(Record::Stock))
        } else {
            self.orderlines.next().map(|r| r.map(Record::Orderline))
        }
    }
}

/// Which part of the join a query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Point(JoinKey),
    Warehouse(u32),
    All,
}

impl Scope {
    /// Key prefix shared by every store keyed on the join key first; `None`
    /// for the whole key space.
    pub fn prefix(&self) -> Result<Option<EncodedKey>, EncodingError> {
        match *self {
            Scope::Point(k) => join_key_bytes(k).map(Some),
            Scope::Warehouse(w) => warehouse_prefix(w).map(Some),
            Scope::All => Ok(None),
        }
    }
}

/// Sorts rows into canonical order for multiset comparison.
pub fn canonical_sort(rows: &mut [JoinRow]) {
    rows.sort_by_key(|r| r.canonical_key());
}
