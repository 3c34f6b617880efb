//! Stock/orderline schemas and the order-preserving byte codec.
//!
//! Every backend stores `(EncodedKey, EncodedRecord)` pairs and compares keys
//! bytewise, so the key codec must make byte order agree with the logical
//! composite-key order. The format, component by component:
//!
//! | component | bytes                                                        |
//! |-----------|--------------------------------------------------------------|
//! | `Id`      | 4 bytes, big-endian `u32`, value must be `>= 1`              |
//! | `Tag`     | 1 byte, `0x00` = stock, `0x01` = orderline                   |
//! | `Byte`    | 1 byte, raw                                                  |
//! | `Text`    | bytes with `0x00 -> 01 01`, `0x01 -> 01 02`, then `0x00` end |
//!
//! Components are concatenated without separators; decoding needs the list
//! of component kinds. Layouts used by the structures:
//!
//! * stock index: `Id(w) Id(i)` (8 bytes)
//! * orderline index: `Id(w) Id(i) Id(d) Id(o) Id(l)` (20 bytes)
//! * merged index: `Id(w) Id(i) Tag` for stock (9 bytes) and
//!   `Id(w) Id(i) Tag Id(d) Id(o) Id(l)` for orderlines (21 bytes)
//! * join view: `Id(w) Id(i) Byte(presence)` followed by `Id(d) Id(o) Id(l)`
//!   unless the row is a stock-only padding row
//!
//! Payloads (`EncodedRecord`) are not compared and use a plain fixed layout,
//! see [`project`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::EncodingError;

/// Maximum length of a text key component, in bytes.
pub const MAX_KEY_TEXT: usize = 255;
/// Maximum length of `StockRecord::data`.
pub const STOCK_DATA_MAX: usize = 50;
/// Width of one fixed-length district info / dist info text.
pub const DIST_INFO_LEN: usize = 24;
/// Number of district info columns in a stock row.
pub const DISTRICT_INFO_COUNT: usize = 10;

pub type DistInfo = [u8; DIST_INFO_LEN];

/// Identifies which table a merged-index entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SourceTag {
    Stock = 0,
    Orderline = 1,
}

impl SourceTag {
    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(SourceTag::Stock),
            1 => Some(SourceTag::Orderline),
            _ => None,
        }
    }
}

/// Which columns of the base tables a structure stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncludedColumns {
    All,
    Covering,
    Keys,
}

impl IncludedColumns {
    pub const ALL: [IncludedColumns; 3] = [
        IncludedColumns::All,
        IncludedColumns::Covering,
        IncludedColumns::Keys,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IncludedColumns::All => "all",
            IncludedColumns::Covering => "covering",
            IncludedColumns::Keys => "keys",
        }
    }
}

impl fmt::Display for IncludedColumns {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for IncludedColumns {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(IncludedColumns::All),
            "covering" => Ok(IncludedColumns::Covering),
            "keys" => Ok(IncludedColumns::Keys),
            other => Err(format!("unknown column policy `{other}`")),
        }
    }
}

/// The shared join key `(warehouse_id, item_id)`; also the stock primary key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JoinKey {
    pub warehouse_id: u32,
    pub item_id: u32,
}

impl JoinKey {
    pub fn new(warehouse_id: u32, item_id: u32) -> Self {
        JoinKey {
            warehouse_id,
            item_id,
        }
    }
}

pub type StockKey = JoinKey;

/// Orderline primary key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderlinePk {
    pub warehouse_id: u32,
    pub district_id: u32,
    pub order_id: u32,
    pub line_number: u32,
}

/// Orderline index key: join key first, then the rest of the primary key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderlineKey {
    pub warehouse_id: u32,
    pub item_id: u32,
    pub district_id: u32,
    pub order_id: u32,
    pub line_number: u32,
}

impl OrderlineKey {
    pub fn join_key(&self) -> JoinKey {
        JoinKey::new(self.warehouse_id, self.item_id)
    }

    pub fn pk(&self) -> OrderlinePk {
        OrderlinePk {
            warehouse_id: self.warehouse_id,
            district_id: self.district_id,
            order_id: self.order_id,
            line_number: self.line_number,
        }
    }

    pub fn remainder(&self) -> [u32; 3] {
        [self.district_id, self.order_id, self.line_number]
    }
}

/// Stock columns named by the join query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StockColumns {
    pub quantity: i32,
    pub year_to_date: i64,
    pub order_count: i32,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StockRecord {
    pub warehouse_id: u32,
    pub item_id: u32,
    /// Present under `covering` and `all`.
    pub columns: Option<StockColumns>,
    /// Present under `all` only.
    pub district_info: Option<Box<[DistInfo; DISTRICT_INFO_COUNT]>>,
}

impl StockRecord {
    pub fn key(&self) -> JoinKey {
        JoinKey::new(self.warehouse_id, self.item_id)
    }

    /// Drops the columns `policy` does not retain.
    pub fn projected(&self, policy: IncludedColumns) -> StockRecord {
        let mut out = self.clone();
        match policy {
            IncludedColumns::All => {}
            IncludedColumns::Covering => out.district_info = None,
            IncludedColumns::Keys => {
                out.columns = None;
                out.district_info = None;
            }
        }
        out
    }
}

/// Non-key orderline columns, TPC-C widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderlineColumns {
    pub supply_warehouse_id: u32,
    pub delivery_date: i64,
    pub quantity: i32,
    /// Amount in cents.
    pub amount: i64,
    pub dist_info: DistInfo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderlineRecord {
    pub warehouse_id: u32,
    pub district_id: u32,
    pub order_id: u32,
    pub line_number: u32,
    pub item_id: u32,
    /// Present under `covering` and `all` (the query selects `o.*`).
    pub columns: Option<OrderlineColumns>,
}

impl OrderlineRecord {
    pub fn key(&self) -> OrderlineKey {
        OrderlineKey {
            warehouse_id: self.warehouse_id,
            item_id: self.item_id,
            district_id: self.district_id,
            order_id: self.order_id,
            line_number: self.line_number,
        }
    }

    pub fn pk(&self) -> OrderlinePk {
        self.key().pk()
    }

    pub fn join_key(&self) -> JoinKey {
        JoinKey::new(self.warehouse_id, self.item_id)
    }

    pub fn projected(&self, policy: IncludedColumns) -> OrderlineRecord {
        let mut out = self.clone();
        if policy == IncludedColumns::Keys {
            out.columns = None;
        }
        out
    }
}

/// A base-table row of either table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Stock(StockRecord),
    Orderline(OrderlineRecord),
}

impl Record {
    pub fn tag(&self) -> SourceTag {
        match self {
            Record::Stock(_) => SourceTag::Stock,
            Record::Orderline(_) => SourceTag::Orderline,
        }
    }

    pub fn key(&self) -> RecordKey {
        match self {
            Record::Stock(s) => RecordKey::Stock(s.key()),
            Record::Orderline(o) => RecordKey::Orderline(o.key()),
        }
    }

    pub fn join_key(&self) -> JoinKey {
        match self {
            Record::Stock(s) => s.key(),
            Record::Orderline(o) => o.join_key(),
        }
    }

    pub fn projected(&self, policy: IncludedColumns) -> Record {
        match self {
            Record::Stock(s) => Record::Stock(s.projected(policy)),
            Record::Orderline(o) => Record::Orderline(o.projected(policy)),
        }
    }
}

/// Index key of a base-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordKey {
    Stock(JoinKey),
    Orderline(OrderlineKey),
}

impl RecordKey {
    pub fn tag(&self) -> SourceTag {
        match self {
            RecordKey::Stock(_) => SourceTag::Stock,
            RecordKey::Orderline(_) => SourceTag::Orderline,
        }
    }

    pub fn join_key(&self) -> JoinKey {
        match self {
            RecordKey::Stock(k) => *k,
            RecordKey::Orderline(k) => k.join_key(),
        }
    }
}

// ---------------------------------------------------------------------------
// Key codec
// ---------------------------------------------------------------------------

/// One typed component of a composite key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeyPart {
    Id(u32),
    Tag(SourceTag),
    Byte(u8),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    Id,
    Tag,
    Byte,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct EncodedKey(pub Vec<u8>);

impl EncodedKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncodedRecord(pub Vec<u8>);

impl EncodedRecord {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

const TEXT_ESCAPE: u8 = 0x01;
const TEXT_END: u8 = 0x00;

pub fn encode_key(parts: &[KeyPart]) -> Result<EncodedKey, EncodingError> {
    if parts.is_empty() {
        return Err(EncodingError::EmptyKey);
    }
    let mut out = Vec::with_capacity(parts.len() * 4);
    for (index, part) in parts.iter().enumerate() {
        match part {
            KeyPart::Id(v) => {
                if *v == 0 {
                    return Err(EncodingError::OutOfRange {
                        index,
                        reason: "identifiers start at 1".into(),
                    });
                }
                out.extend_from_slice(&v.to_be_bytes());
            }
            KeyPart::Tag(t) => out.push(*t as u8),
            KeyPart::Byte(b) => out.push(*b),
            KeyPart::Text(s) => {
                if s.len() > MAX_KEY_TEXT {
                    return Err(EncodingError::OutOfRange {
                        index,
                        reason: format!("text longer than {MAX_KEY_TEXT} bytes"),
                    });
                }
                for &b in s.as_bytes() {
                    match b {
                        0x00 => out.extend_from_slice(&[TEXT_ESCAPE, 0x01]),
                        0x01 => out.extend_from_slice(&[TEXT_ESCAPE, 0x02]),
                        _ => out.push(b),
                    }
                }
                out.push(TEXT_END);
            }
        }
    }
    Ok(EncodedKey(out))
}

pub fn decode_key(bytes: &[u8], kinds: &[KeyKind]) -> Result<Vec<KeyPart>, EncodingError> {
    let mut pos = 0;
    let mut parts = Vec::with_capacity(kinds.len());
    for kind in kinds {
        match kind {
            KeyKind::Id => {
                let v = read_u32(bytes, pos)?;
                if v == 0 {
                    return Err(EncodingError::InvalidByte {
                        byte: 0,
                        offset: pos,
                    });
                }
                parts.push(KeyPart::Id(v));
                pos += 4;
            }
            KeyKind::Tag => {
                let b = *bytes.get(pos).ok_or(EncodingError::Truncated(pos))?;
                let tag = SourceTag::from_byte(b).ok_or(EncodingError::InvalidByte {
                    byte: b,
                    offset: pos,
                })?;
                parts.push(KeyPart::Tag(tag));
                pos += 1;
            }
            KeyKind::Byte => {
                let b = *bytes.get(pos).ok_or(EncodingError::Truncated(pos))?;
                parts.push(KeyPart::Byte(b));
                pos += 1;
            }
            KeyKind::Text => {
                let mut raw = Vec::new();
                loop {
                    let b = *bytes.get(pos).ok_or(EncodingError::Truncated(pos))?;
                    pos += 1;
                    match b {
                        TEXT_END => break,
                        TEXT_ESCAPE => {
                            let e = *bytes.get(pos).ok_or(EncodingError::Truncated(pos))?;
                            raw.push(match e {
                                0x01 => 0x00,
                                0x02 => 0x01,
                                _ => {
                                    return Err(EncodingError::InvalidByte {
                                        byte: e,
                                        offset: pos,
                                    })
                                }
                            });
                            pos += 1;
                        }
                        _ => raw.push(b),
                    }
                }
                let s = String::from_utf8(raw).map_err(|_| EncodingError::InvalidByte {
                    byte: 0,
                    offset: pos,
                })?;
                parts.push(KeyPart::Text(s));
            }
        }
    }
    if pos != bytes.len() {
        return Err(EncodingError::Trailing(bytes.len() - pos));
    }
    Ok(parts)
}

fn read_u32(bytes: &[u8], pos: usize) -> Result<u32, EncodingError> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(EncodingError::Truncated(pos))
}

/// Smallest byte string greater than every string starting with `prefix`,
/// or `None` when no such bound exists (all `0xff`).
pub fn prefix_successor(prefix: &[u8]) -> Option<Vec<u8>> {
    let mut out = prefix.to_vec();
    while let Some(last) = out.pop() {
        if last < 0xff {
            out.push(last + 1);
            return Some(out);
        }
    }
    None
}

fn push_id(out: &mut Vec<u8>, v: u32, index: usize) -> Result<(), EncodingError> {
    if v == 0 {
        return Err(EncodingError::OutOfRange {
            index,
            reason: "identifiers start at 1".into(),
        });
    }
    out.extend_from_slice(&v.to_be_bytes());
    Ok(())
}

/// Key prefix selecting one warehouse in any of the layouts.
pub fn warehouse_prefix(warehouse_id: u32) -> Result<EncodedKey, EncodingError> {
    encode_key(&[KeyPart::Id(warehouse_id)])
}

/// `(warehouse_id, item_id)`, the stock index key and the join-group prefix.
pub fn join_key_bytes(key: JoinKey) -> Result<EncodedKey, EncodingError> {
    let mut out = Vec::with_capacity(8);
    push_id(&mut out, key.warehouse_id, 0)?;
    push_id(&mut out, key.item_id, 1)?;
    Ok(EncodedKey(out))
}

pub fn stock_index_key(key: JoinKey) -> Result<EncodedKey, EncodingError> {
    join_key_bytes(key)
}

pub fn orderline_index_key(key: &OrderlineKey) -> Result<EncodedKey, EncodingError> {
    let mut out = join_key_bytes(key.join_key())?.0;
    for (i, v) in key.remainder().into_iter().enumerate() {
        push_id(&mut out, v, i + 2)?;
    }
    Ok(EncodedKey(out))
}

/// Merged-index key: join key, source tag, then the rest of the source
/// table's index key.
pub fn merged_entry_key(
    join: JoinKey,
    tag: SourceTag,
    remainder: &[u32],
) -> Result<EncodedKey, EncodingError> {
    let expected = match tag {
        SourceTag::Stock => 0,
        SourceTag::Orderline => 3,
    };
    if remainder.len() != expected {
        return Err(EncodingError::RemainderMismatch {
            tag,
            expected,
            got: remainder.len(),
        });
    }
    let mut out = join_key_bytes(join)?.0;
    out.push(tag as u8);
    for (i, &v) in remainder.iter().enumerate() {
        push_id(&mut out, v, i + 3)?;
    }
    Ok(EncodedKey(out))
}

pub fn merged_record_key(key: &RecordKey) -> Result<EncodedKey, EncodingError> {
    match key {
        RecordKey::Stock(k) => merged_entry_key(*k, SourceTag::Stock, &[]),
        RecordKey::Orderline(k) => {
            merged_entry_key(k.join_key(), SourceTag::Orderline, &k.remainder())
        }
    }
}

/// Decodes a merged-index key back to the record key it was built from.
pub fn decode_merged_key(bytes: &[u8]) -> Result<RecordKey, EncodingError> {
    let warehouse_id = read_u32(bytes, 0)?;
    let item_id = read_u32(bytes, 4)?;
    let tag_byte = *bytes.get(8).ok_or(EncodingError::Truncated(8))?;
    let tag = SourceTag::from_byte(tag_byte).ok_or(EncodingError::InvalidByte {
        byte: tag_byte,
        offset: 8,
    })?;
    match tag {
        SourceTag::Stock => {
            check_len(bytes, 9)?;
            Ok(RecordKey::Stock(JoinKey::new(warehouse_id, item_id)))
        }
        SourceTag::Orderline => {
            check_len(bytes, 21)?;
            Ok(RecordKey::Orderline(OrderlineKey {
                warehouse_id,
                item_id,
                district_id: read_u32(bytes, 9)?,
                order_id: read_u32(bytes, 13)?,
                line_number: read_u32(bytes, 17)?,
            }))
        }
    }
}

pub fn decode_stock_index_key(bytes: &[u8]) -> Result<JoinKey, EncodingError> {
    check_len(bytes, 8)?;
    Ok(JoinKey::new(read_u32(bytes, 0)?, read_u32(bytes, 4)?))
}

pub fn decode_orderline_index_key(bytes: &[u8]) -> Result<OrderlineKey, EncodingError> {
    check_len(bytes, 20)?;
    Ok(OrderlineKey {
        warehouse_id: read_u32(bytes, 0)?,
        item_id: read_u32(bytes, 4)?,
        district_id: read_u32(bytes, 8)?,
        order_id: read_u32(bytes, 12)?,
        line_number: read_u32(bytes, 16)?,
    })
}

fn check_len(bytes: &[u8], len: usize) -> Result<(), EncodingError> {
    match bytes.len().cmp(&len) {
        std::cmp::Ordering::Less => Err(EncodingError::Truncated(bytes.len())),
        std::cmp::Ordering::Greater => Err(EncodingError::Trailing(bytes.len() - len)),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Payload codec
// ---------------------------------------------------------------------------

/// Encodes the non-key columns `policy` retains.
///
/// Stock: `quantity i32 | year_to_date i64 | order_count i32 | data (u8 len + bytes)`
/// under `covering`, followed by ten 24-byte district infos under `all`.
/// Orderline: `supply_w u32 | delivery i64 | quantity i32 | amount i64 |
/// dist_info [24]` under `covering` and `all`. Integers are big-endian.
/// `keys` yields an empty payload for both tables.
///
/// Columns the record does not carry are written as zeroes; `data` longer than
/// 50 bytes is cut at 50.
pub fn project(record: &Record, policy: IncludedColumns) -> EncodedRecord {
    let mut out = Vec::new();
    match record {
        Record::Stock(s) => write_stock_payload(&mut out, s, policy),
        Record::Orderline(o) => write_orderline_payload(&mut out, o, policy),
    }
    EncodedRecord(out)
}

pub fn stock_payload(s: &StockRecord, policy: IncludedColumns) -> Vec<u8> {
    let mut out = Vec::new();
    write_stock_payload(&mut out, s, policy);
    out
}

pub fn orderline_payload(o: &OrderlineRecord, policy: IncludedColumns) -> Vec<u8> {
    let mut out = Vec::new();
    write_orderline_payload(&mut out, o, policy);
    out
}

pub(crate) fn write_stock_payload(out: &mut Vec<u8>, s: &StockRecord, policy: IncludedColumns) {
    if policy == IncludedColumns::Keys {
        return;
    }
    let empty = StockColumns {
        quantity: 0,
        year_to_date: 0,
        order_count: 0,
        data: String::new(),
    };
    let cols = s.columns.as_ref().unwrap_or(&empty);
    out.extend_from_slice(&cols.quantity.to_be_bytes());
    out.extend_from_slice(&cols.year_to_date.to_be_bytes());
    out.extend_from_slice(&cols.order_count.to_be_bytes());
    let data = cols.data.as_bytes();
    let data = &data[..data.len().min(STOCK_DATA_MAX)];
    out.push(data.len() as u8);
    out.extend_from_slice(data);
    if policy == IncludedColumns::All {
        match &s.district_info {
            Some(infos) => infos.iter().for_each(|d| out.extend_from_slice(d)),
            None => out.extend(std::iter::repeat_n(
                0u8,
                DIST_INFO_LEN * DISTRICT_INFO_COUNT,
            )),
        }
    }
}

pub(crate) fn write_orderline_payload(
    out: &mut Vec<u8>,
    o: &OrderlineRecord,
    policy: IncludedColumns,
) {
    if policy == IncludedColumns::Keys {
        return;
    }
    let empty = OrderlineColumns {
        supply_warehouse_id: 0,
        delivery_date: 0,
        quantity: 0,
        amount: 0,
        dist_info: [0; DIST_INFO_LEN],
    };
    let cols = o.columns.as_ref().unwrap_or(&empty);
    out.extend_from_slice(&cols.supply_warehouse_id.to_be_bytes());
    out.extend_from_slice(&cols.delivery_date.to_be_bytes());
    out.extend_from_slice(&cols.quantity.to_be_bytes());
    out.extend_from_slice(&cols.amount.to_be_bytes());
    out.extend_from_slice(&cols.dist_info);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EncodingError> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or(EncodingError::Truncated(self.pos))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, EncodingError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, EncodingError> {
        Ok(i32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, EncodingError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fixed(&mut self) -> Result<DistInfo, EncodingError> {
        Ok(self.take(DIST_INFO_LEN)?.try_into().unwrap())
    }
}

/// Decodes a stock payload at the front of `bytes`; returns the record and
/// the number of bytes consumed.
pub fn decode_stock_prefix(
    key: JoinKey,
    bytes: &[u8],
    policy: IncludedColumns,
) -> Result<(StockRecord, usize), EncodingError> {
    let mut r = Reader { bytes, pos: 0 };
    let mut record = StockRecord {
        warehouse_id: key.warehouse_id,
        item_id: key.item_id,
        columns: None,
        district_info: None,
    };
    if policy != IncludedColumns::Keys {
        let quantity = r.i32()?;
        let year_to_date = r.i64()?;
        let order_count = r.i32()?;
        let len = r.take(1)?[0] as usize;
        let offset = r.pos;
        let data = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| EncodingError::InvalidByte { byte: 0, offset })?;
        record.columns = Some(StockColumns {
            quantity,
            year_to_date,
            order_count,
            data,
        });
        if policy == IncludedColumns::All {
            let mut infos = Box::new([[0u8; DIST_INFO_LEN]; DISTRICT_INFO_COUNT]);
            for info in infos.iter_mut() {
                *info = r.fixed()?;
            }
            record.district_info = Some(infos);
        }
    }
    Ok((record, r.pos))
}

pub fn decode_orderline_prefix(
    key: OrderlineKey,
    bytes: &[u8],
    policy: IncludedColumns,
) -> Result<(OrderlineRecord, usize), EncodingError> {
    let mut r = Reader { bytes, pos: 0 };
    let columns = if policy == IncludedColumns::Keys {
        None
    } else {
        Some(OrderlineColumns {
            supply_warehouse_id: r.u32()?,
            delivery_date: r.i64()?,
            quantity: r.i32()?,
            amount: r.i64()?,
            dist_info: r.fixed()?,
        })
    };
    let record = OrderlineRecord {
        warehouse_id: key.warehouse_id,
        district_id: key.district_id,
        order_id: key.order_id,
        line_number: key.line_number,
        item_id: key.item_id,
        columns,
    };
    Ok((record, r.pos))
}

pub fn decode_stock(
    key: JoinKey,
    bytes: &[u8],
    policy: IncludedColumns,
) -> Result<StockRecord, EncodingError> {
    let (record, used) = decode_stock_prefix(key, bytes, policy)?;
    if used != bytes.len() {
        return Err(EncodingError::Trailing(bytes.len() - used));
    }
    Ok(record)
}

pub fn decode_orderline(
    key: OrderlineKey,
    bytes: &[u8],
    policy: IncludedColumns,
) -> Result<OrderlineRecord, EncodingError> {
    let (record, used) = decode_orderline_prefix(key, bytes, policy)?;
    if used != bytes.len() {
        return Err(EncodingError::Trailing(bytes.len() - used));
    }
    Ok(record)
}

/// Rebuilds a record from its key and payload.
pub fn decode_record(
    key: &RecordKey,
    payload: &[u8],
    policy: IncludedColumns,
) -> Result<Record, EncodingError> {
    Ok(match key {
        RecordKey::Stock(k) => Record::Stock(decode_stock(*k, payload, policy)?),
        RecordKey::Orderline(k) => Record::Orderline(decode_orderline(*k, payload, policy)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stock(w: u32, i: u32) -> StockRecord {
        StockRecord {
            warehouse_id: w,
            item_id: i,
            columns: Some(StockColumns {
                quantity: 10,
                year_to_date: 0,
                order_count: 0,
                data: "stock-data".into(),
            }),
            district_info: Some(Box::new(
                [*b"abcdefghijklmnopqrstuvwx"; DISTRICT_INFO_COUNT],
            )),
        }
    }

    fn orderline(w: u32, i: u32, d: u32, o: u32, l: u32) -> OrderlineRecord {
        OrderlineRecord {
            warehouse_id: w,
            district_id: d,
            order_id: o,
            line_number: l,
            item_id: i,
            columns: Some(OrderlineColumns {
                supply_warehouse_id: w,
                delivery_date: 1_700_000_000,
                quantity: 5,
                amount: 1234,
                dist_info: *b"ABCDEFGHIJKLMNOPQRSTUVWX",
            }),
        }
    }

    #[test]
    fn integer_order() {
        let a = encode_key(&[KeyPart::Id(1)]).unwrap();
        let b = encode_key(&[KeyPart::Id(2)]).unwrap();
        assert!(a < b);
    }

    #[test]
    fn leading_component_dominates() {
        let a = encode_key(&[KeyPart::Id(1), KeyPart::Id(2)]).unwrap();
        let b = encode_key(&[KeyPart::Id(2), KeyPart::Id(1)]).unwrap();
        assert!(a < b);
    }

    #[test]
    fn round_trip_merged_layout() {
        let parts = vec![
            KeyPart::Id(1),
            KeyPart::Id(2),
            KeyPart::Tag(SourceTag::Orderline),
            KeyPart::Id(3),
            KeyPart::Id(7),
            KeyPart::Id(1),
        ];
        let kinds = [
            KeyKind::Id,
            KeyKind::Id,
            KeyKind::Tag,
            KeyKind::Id,
            KeyKind::Id,
            KeyKind::Id,
        ];
        let enc = encode_key(&parts).unwrap();
        assert_eq!(decode_key(enc.as_bytes(), &kinds).unwrap(), parts);
    }

    #[test]
    fn out_of_range_components_are_rejected() {
        assert!(matches!(
            encode_key(&[KeyPart::Id(0)]),
            Err(EncodingError::OutOfRange { index: 0, .. })
        ));
        let long = "x".repeat(MAX_KEY_TEXT + 1);
        assert!(encode_key(&[KeyPart::Id(1), KeyPart::Text(long)]).is_err());
        assert_eq!(encode_key(&[]), Err(EncodingError::EmptyKey));
    }

    #[test]
    fn text_escapes_keep_order() {
        let words = [
            "",
            "\u{0}",
            "\u{0}\u{0}",
            "\u{1}",
            "a",
            "a\u{0}",
            "a\u{1}b",
            "ab",
            "b",
        ];
        let enc: Vec<_> = words
            .iter()
            .map(|w| encode_key(&[KeyPart::Text(w.to_string()), KeyPart::Id(1)]).unwrap())
            .collect();
        for pair in enc.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        for (w, e) in words.iter().zip(&enc) {
            let back = decode_key(e.as_bytes(), &[KeyKind::Text, KeyKind::Id]).unwrap();
            assert_eq!(back[0], KeyPart::Text(w.to_string()));
        }
    }

    #[test]
    fn merged_key_orders_four_rows() {
        // s1, ol1, ol2, s2, ol3, ol4
        let keys = [
            merged_entry_key(JoinKey::new(1, 2), SourceTag::Orderline, &[1, 1, 4]).unwrap(),
            merged_entry_key(JoinKey::new(1, 1), SourceTag::Orderline, &[1, 1, 2]).unwrap(),
            merged_entry_key(JoinKey::new(1, 2), SourceTag::Stock, &[]).unwrap(),
            merged_entry_key(JoinKey::new(1, 1), SourceTag::Orderline, &[1, 1, 1]).unwrap(),
            merged_entry_key(JoinKey::new(1, 1), SourceTag::Stock, &[]).unwrap(),
            merged_entry_key(JoinKey::new(1, 2), SourceTag::Orderline, &[1, 1, 3]).unwrap(),
        ];
        let mut sorted = keys.to_vec();
        sorted.sort();
        let decoded: Vec<_> = sorted
            .iter()
            .map(|k| decode_merged_key(k.as_bytes()).unwrap())
            .collect();
        let expected = vec![
            RecordKey::Stock(JoinKey::new(1, 1)),
            RecordKey::Orderline(orderline(1, 1, 1, 1, 1).key()),
            RecordKey::Orderline(orderline(1, 1, 1, 1, 2).key()),
            RecordKey::Stock(JoinKey::new(1, 2)),
            RecordKey::Orderline(orderline(1, 2, 1, 1, 3).key()),
            RecordKey::Orderline(orderline(1, 2, 1, 1, 4).key()),
        ];
        assert_eq!(decoded, expected);
    }

    #[test]
    fn remainder_tie_break() {
        let a = merged_entry_key(JoinKey::new(1, 1), SourceTag::Orderline, &[1, 1, 1]).unwrap();
        let b = merged_entry_key(JoinKey::new(1, 1), SourceTag::Orderline, &[1, 1, 2]).unwrap();
        assert!(a < b);
    }

    #[test]
    fn stock_sorts_before_orderline_in_group() {
        let s = merged_entry_key(JoinKey::new(1, 1), SourceTag::Stock, &[]).unwrap();
        let o = merged_entry_key(JoinKey::new(1, 1), SourceTag::Orderline, &[1, 1, 1]).unwrap();
        assert!(s < o);
    }

    #[test]
    fn remainder_must_match_tag() {
        assert!(matches!(
            merged_entry_key(JoinKey::new(1, 1), SourceTag::Stock, &[1]),
            Err(EncodingError::RemainderMismatch { .. })
        ));
        assert!(matches!(
            merged_entry_key(JoinKey::new(1, 1), SourceTag::Orderline, &[]),
            Err(EncodingError::RemainderMismatch { .. })
        ));
    }

    #[test]
    fn tag_costs_exactly_one_byte() {
        let s = stock(3, 4);
        let o = orderline(3, 4, 1, 2, 3);
        assert_eq!(
            merged_record_key(&RecordKey::Stock(s.key())).unwrap().len(),
            stock_index_key(s.key()).unwrap().len() + 1
        );
        assert_eq!(
            merged_record_key(&RecordKey::Orderline(o.key()))
                .unwrap()
                .len(),
            orderline_index_key(&o.key()).unwrap().len() + 1
        );
    }

    #[test]
    fn keys_policy_has_empty_payload() {
        assert!(project(&Record::Stock(stock(1, 1)), IncludedColumns::Keys).is_empty());
        assert!(project(
            &Record::Orderline(orderline(1, 1, 1, 1, 1)),
            IncludedColumns::Keys
        )
        .is_empty());
    }

    #[test]
    fn covering_stock_payload_holds_query_columns() {
        let s = stock(1, 1);
        let bytes = project(&Record::Stock(s.clone()), IncludedColumns::Covering);
        let back = decode_stock(s.key(), bytes.as_bytes(), IncludedColumns::Covering).unwrap();
        assert_eq!(back.columns, s.columns);
        assert_eq!(back.district_info, None);
        // 4 + 8 + 4 + 1 + len("stock-data")
        assert_eq!(bytes.len(), 17 + 10);
    }

    #[test]
    fn payload_sizes_nest() {
        let r = Record::Stock(stock(1, 1));
        let all = project(&r, IncludedColumns::All).len();
        let cov = project(&r, IncludedColumns::Covering).len();
        let keys = project(&r, IncludedColumns::Keys).len();
        assert!(all > cov && cov > keys);
        assert_eq!(all - cov, DIST_INFO_LEN * DISTRICT_INFO_COUNT);
    }

    #[test]
    fn payload_round_trip_all_policies() {
        for policy in IncludedColumns::ALL {
            let s = Record::Stock(stock(2, 9));
            let o = Record::Orderline(orderline(2, 9, 4, 5, 6));
            for r in [s, o] {
                let bytes = project(&r, policy);
                let back = decode_record(&r.key(), bytes.as_bytes(), policy).unwrap();
                assert_eq!(back, r.projected(policy));
            }
        }
    }

    #[test]
    fn prefix_successor_bounds() {
        assert_eq!(prefix_successor(&[0, 1]), Some(vec![0, 2]));
        assert_eq!(prefix_successor(&[0, 0xff]), Some(vec![1]));
        assert_eq!(prefix_successor(&[0xff, 0xff]), None);
    }
}
