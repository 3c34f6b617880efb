//! Deterministic stock/orderline databases, new-order transactions and query
//! parameters.
//!
//! Everything here is a pure function of a [`WorkloadConfig`] and its seed.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delta::Delta;
use crate::encoding::{
    DistInfo, IncludedColumns, JoinKey, OrderlineColumns, OrderlinePk, OrderlineRecord, Record,
    StockColumns, StockRecord, DISTRICT_INFO_COUNT, DIST_INFO_LEN, STOCK_DATA_MAX,
};
use crate::join::Scope;
use crate::oracle::ShadowDb;

pub const DISTRICTS_PER_WAREHOUSE: u32 = 10;
pub const MIN_LINES_PER_ORDER: usize = 5;
pub const MAX_LINES_PER_ORDER: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub warehouses: u32,
    pub items_per_warehouse: u32,
    pub orderlines_per_warehouse: u32,
    /// Fraction of orderlines whose item exists in stock.
    pub so: f64,
    pub policy: IncludedColumns,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            warehouses: 2,
            items_per_warehouse: 2_000,
            orderlines_per_warehouse: 20_000,
            so: 1.0,
            policy: IncludedColumns::Covering,
            seed: 42,
        }
    }
}

impl WorkloadConfig {
    pub fn total_orderlines(&self) -> usize {
        self.warehouses as usize * self.orderlines_per_warehouse as usize
    }

    /// Number of orderlines that reference an existing stock row.
    pub fn matching_orderlines(&self) -> usize {
        if self.items_per_warehouse == 0 {
            return 0;
        }
        let exact = self.so * self.total_orderlines() as f64;
        // absorb float noise such as 0.19 * 20000 = 3800.0000000000005
        ((exact - 1e-9).ceil().max(0.0) as usize).min(self.total_orderlines())
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.so) {
            return Err(format!("so must lie in [0, 1], got {}", self.so));
        }
        Ok(())
    }
}

/// Both base tables, in generation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    pub stock: Vec<StockRecord>,
    pub orderlines: Vec<OrderlineRecord>,
}

impl Database {
    pub fn projected(&self, policy: IncludedColumns) -> Database {
        Database {
            stock: self.stock.iter().map(|s| s.projected(policy)).collect(),
            orderlines: self
                .orderlines
                .iter()
                .map(|o| o.projected(policy))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.stock.len() + self.orderlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(stock rows, orderline rows)` per join key.
    pub fn group_sizes(&self) -> HashMap<JoinKey, (usize, usize)> {
        let mut groups: HashMap<JoinKey, (usize, usize)> = HashMap::new();
        for s in &self.stock {
            groups.entry(s.key()).or_default().0 += 1;
        }
        for o in &self.orderlines {
            groups.entry(o.join_key()).or_default().1 += 1;
        }
        groups
    }

    /// Inner-join cardinality, summed over key groups.
    pub fn inner_join_size(&self) -> usize {
        self.group_sizes().values().map(|(r, s)| r * s).sum()
    }
}

fn text(rng: &mut ChaCha8Rng, len: usize) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    (0..len)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

fn fixed(rng: &mut ChaCha8Rng) -> DistInfo {
    text(rng, DIST_INFO_LEN).into_bytes().try_into().unwrap()
}

fn stock_row(rng: &mut ChaCha8Rng, warehouse_id: u32, item_id: u32) -> StockRecord {
    let data_len = rng.gen_range(26..=STOCK_DATA_MAX);
    let columns = StockColumns {
        quantity: rng.gen_range(10..=100),
        year_to_date: 0,
        order_count: 0,
        data: text(rng, data_len),
    };
    let mut infos = Box::new([[0u8; DIST_INFO_LEN]; DISTRICT_INFO_COUNT]);
    for info in infos.iter_mut() {
        *info = fixed(rng);
    }
    StockRecord {
        warehouse_id,
        item_id,
        columns: Some(columns),
        district_info: Some(infos),
    }
}

fn orderline_columns(rng: &mut ChaCha8Rng, warehouse_id: u32) -> OrderlineColumns {
    OrderlineColumns {
        supply_warehouse_id: warehouse_id,
        delivery_date: rng.gen_range(1_600_000_000..1_700_000_000),
        quantity: 5,
        amount: rng.gen_range(1..=999_999),
        dist_info: fixed(rng),
    }
}

fn matching_item(rng: &mut ChaCha8Rng, items: u32) -> u32 {
    rng.gen_range(1..=items)
}

/// Item ids in `(items, 2 * items]` never match a stock row.
fn dangling_item(rng: &mut ChaCha8Rng, items: u32) -> u32 {
    rng.gen_range(items + 1..=(2 * items).max(items + 1))
}

/// Builds the stock table and the orderline table.
///
/// Orderlines are grouped into orders of 5 to 15 lines spread over ten
/// districts. Exactly `config.matching_orderlines()` of them, chosen by a
/// seeded shuffle, reference an existing item.
pub fn generate(config: &WorkloadConfig) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let items = config.items_per_warehouse;
    let mut stock = Vec::with_capacity(config.warehouses as usize * items as usize);
    for w in 1..=config.warehouses {
        for i in 1..=items {
            stock.push(stock_row(&mut rng, w, i));
        }
    }

    let total = config.total_orderlines();
    let mut matching = vec![false; total];
    matching[..config.matching_orderlines()].fill(true);
    matching.shuffle(&mut rng);

    let mut orderlines = Vec::with_capacity(total);
    for w in 1..=config.warehouses {
        let mut next_order = [1u32; DISTRICTS_PER_WAREHOUSE as usize];
        let mut remaining = config.orderlines_per_warehouse as usize;
        let mut district = 0;
        while remaining > 0 {
            let lines = rng
                .gen_range(MIN_LINES_PER_ORDER..=MAX_LINES_PER_ORDER)
                .min(remaining);
            let order_id = next_order[district];
            next_order[district] += 1;
            for line in 1..=lines as u32 {
                let item_id = if matching[orderlines.len()] {
                    matching_item(&mut rng, items)
                } else {
                    dangling_item(&mut rng, items)
                };
                orderlines.push(OrderlineRecord {
                    warehouse_id: w,
                    district_id: district as u32 + 1,
                    order_id,
                    line_number: line,
                    item_id,
                    columns: Some(orderline_columns(&mut rng, w)),
                });
            }
            remaining -= lines;
            district = (district + 1) % DISTRICTS_PER_WAREHOUSE as usize;
        }
    }
    Database { stock, orderlines }
}

/// One TPC-C new-order transaction against the stock/orderline pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewOrderTxn {
    pub warehouse_id: u32,
    pub district_id: u32,
    pub order_id: u32,
    pub lines: Vec<OrderlineRecord>,
    /// `(before, after)` images, one per line whose item exists.
    pub stock_updates: Vec<(StockRecord, StockRecord)>,
}

impl NewOrderTxn {
    /// For each line: the stock update if the item exists, then the
    /// orderline insert.
    pub fn deltas(&self) -> Vec<Delta> {
        let mut out = Vec::with_capacity(self.lines.len() + self.stock_updates.len());
        let mut updates = self.stock_updates.iter().peekable();
        for line in &self.lines {
            if let Some((old, new)) = updates.next_if(|(old, _)| old.key() == line.join_key()) {
                out.push(Delta::Update {
                    old: Record::Stock(old.clone()),
                    new: Record::Stock(new.clone()),
                });
            }
            out.push(Delta::Insert(Record::Orderline(line.clone())));
        }
        out
    }
}

/// Produces new-order transactions and keeps its own copy of the stock rows
/// so each update carries correct before and after images.
pub struct NewOrderGen {
    rng: ChaCha8Rng,
    config: WorkloadConfig,
    stock: HashMap<JoinKey, StockRecord>,
    next_order: HashMap<(u32, u32), u32>,
}

impl NewOrderGen {
    pub fn new(config: &WorkloadConfig, db: &Database, seed: u64) -> Self {
        let mut next_order: HashMap<(u32, u32), u32> = HashMap::new();
        for o in &db.orderlines {
            let next = next_order
                .entry((o.warehouse_id, o.district_id))
                .or_insert(1);
            *next = (*next).max(o.order_id + 1);
        }
        NewOrderGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            config: *config,
            stock: db.stock.iter().map(|s| (s.key(), s.clone())).collect(),
            next_order,
        }
    }

    pub fn next_txn(&mut self) -> NewOrderTxn {
        let cfg = self.config;
        let warehouse_id = self.rng.gen_range(1..=cfg.warehouses.max(1));
        let district_id = self.rng.gen_range(1..=DISTRICTS_PER_WAREHOUSE);
        let next = self
            .next_order
            .entry((warehouse_id, district_id))
            .or_insert(1);
        let order_id = *next;
        *next += 1;

        let count = self
            .rng
            .gen_range(MIN_LINES_PER_ORDER..=MAX_LINES_PER_ORDER);
        let mut used: Vec<u32> = Vec::with_capacity(count);
        let mut lines = Vec::with_capacity(count);
        let mut stock_updates = Vec::new();
        let items = cfg.items_per_warehouse;
        for line_number in 1..=count as u32 {
            let matching = items > 0 && self.rng.gen_bool(cfg.so);
            let mut item_id = 0;
            // distinct items per order unless the domain is too small
            for _ in 0..32 {
                item_id = if matching {
                    matching_item(&mut self.rng, items)
                } else {
                    dangling_item(&mut self.rng, items)
                };
                if !used.contains(&item_id) {
                    break;
                }
            }
            used.push(item_id);
            let line = OrderlineRecord {
                warehouse_id,
                district_id,
                order_id,
                line_number,
                item_id,
                columns: Some(orderline_columns(&mut self.rng, warehouse_id)),
            };
            let quantity = self.rng.gen_range(1..=10);
            if let Some(s) = self.stock.get_mut(&line.join_key()) {
                let old = s.clone();
                if let Some(c) = s.columns.as_mut() {
                    c.quantity = if c.quantity >= quantity + 10 {
                        c.quantity - quantity
                    } else {
                        c.quantity - quantity + 91
                    };
                    c.year_to_date += quantity as i64;
                    c.order_count += 1;
                }
                stock_updates.push((old, s.clone()));
            }
            let mut line = line;
            if let Some(c) = line.columns.as_mut() {
                c.quantity = quantity;
            }
            lines.push(line);
        }
        NewOrderTxn {
            warehouse_id,
            district_id,
            order_id,
            lines,
            stock_updates,
        }
    }
}

/// Random single-row changes of every kind, valid against the current
/// state of a shadow database. Stock inserts use item ids from the dangling
/// range too, so unmatched orderlines gain and lose partners.
pub struct DeltaGen {
    rng: ChaCha8Rng,
    config: WorkloadConfig,
}

impl DeltaGen {
    pub fn new(config: &WorkloadConfig, seed: u64) -> Self {
        DeltaGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            config: *config,
        }
    }

    fn any_item(&mut self) -> u32 {
        self.rng
            .gen_range(1..=2 * self.config.items_per_warehouse.max(1))
    }

    fn warehouse(&mut self) -> u32 {
        self.rng.gen_range(1..=self.config.warehouses.max(1))
    }

    fn pick<'a, T>(&mut self, mut values: impl ExactSizeIterator<Item = &'a T>) -> Option<&'a T> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        values.nth(self.rng.gen_range(0..n))
    }

    pub fn next_delta(&mut self, db: &ShadowDb) -> Delta {
        loop {
            let roll = self.rng.gen_range(0..100);
            let delta = match roll {
                0..=29 => self
                    .new_orderline(db)
                    .map(|o| Delta::Insert(Record::Orderline(o))),
                30..=44 => self
                    .pick(db.orderline.values())
                    .cloned()
                    .map(|o| Delta::Delete(Record::Orderline(o))),
                45..=64 => self.pick(db.orderline.values()).cloned().map(|old| {
                    let mut new = old.clone();
                    if roll < 50 {
                        new.item_id = self.any_item();
                    }
                    new.columns = Some(orderline_columns(&mut self.rng, old.warehouse_id));
                    Delta::Update {
                        old: Record::Orderline(old),
                        new: Record::Orderline(new),
                    }
                }),
                65..=74 => {
                    let (w, i) = (self.warehouse(), self.any_item());
                    (!db.stock.contains_key(&JoinKey::new(w, i)))
                        .then(|| Delta::Insert(Record::Stock(stock_row(&mut self.rng, w, i))))
                }
                75..=84 => self
                    .pick(db.stock.values())
                    .cloned()
                    .map(|s| Delta::Delete(Record::Stock(s))),
                _ => self.pick(db.stock.values()).cloned().map(|old| {
                    let new = stock_row(&mut self.rng, old.warehouse_id, old.item_id);
                    Delta::Update {
                        old: Record::Stock(old),
                        new: Record::Stock(new),
                    }
                }),
            };
            if let Some(d) = delta {
                return d;
            }
        }
    }

    fn new_orderline(&mut self, db: &ShadowDb) -> Option<OrderlineRecord> {
        let w = self.warehouse();
        let pk = OrderlinePk {
            warehouse_id: w,
            district_id: self.rng.gen_range(1..=DISTRICTS_PER_WAREHOUSE),
            order_id: self.rng.gen_range(1..=1000),
            line_number: self.rng.gen_range(1..=MAX_LINES_PER_ORDER as u32),
        };
        if db.orderline.contains_key(&pk) {
            return None;
        }
        let item_id = if self.rng.gen_bool(self.config.so) {
            matching_item(&mut self.rng, self.config.items_per_warehouse.max(1))
        } else {
            dangling_item(&mut self.rng, self.config.items_per_warehouse.max(1))
        };
        Some(OrderlineRecord {
            warehouse_id: w,
            district_id: pk.district_id,
            order_id: pk.order_id,
            line_number: pk.line_number,
            item_id,
            columns: Some(orderline_columns(&mut self.rng, w)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Point,
    Scan,
}

/// Point queries draw a stock key uniformly; scans draw a warehouse.
pub fn query_stream(
    config: &WorkloadConfig,
    kind: QueryKind,
    seed: u64,
) -> impl Iterator<Item = Scope> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let warehouses = config.warehouses.max(1);
    let items = config.items_per_warehouse.max(1);
    std::iter::repeat_with(move || {
        let w = rng.gen_range(1..=warehouses);
        match kind {
            QueryKind::Point => Scope::Point(JoinKey::new(w, rng.gen_range(1..=items))),
            QueryKind::Scan => Scope::Warehouse(w),
        }
    })
}

/// Small fixed databases for examples and tests.
pub mod sample {
    use super::*;

    fn stock(item_id: u32, quantity: i32) -> StockRecord {
        StockRecord {
            warehouse_id: 1,
            item_id,
            columns: Some(StockColumns {
                quantity,
                year_to_date: 0,
                order_count: 0,
                data: format!("stock-{item_id}"),
            }),
            district_info: Some(Box::new([[b'd'; DIST_INFO_LEN]; DISTRICT_INFO_COUNT])),
        }
    }

    fn orderline(item_id: u32, order_id: u32, line_number: u32) -> OrderlineRecord {
        OrderlineRecord {
            warehouse_id: 1,
            district_id: 1,
            order_id,
            line_number,
            item_id,
            columns: Some(OrderlineColumns {
                supply_warehouse_id: 1,
                delivery_date: 0,
                quantity: 5,
                amount: 500 * order_id as i64,
                dist_info: [b'o'; DIST_INFO_LEN],
            }),
        }
    }

    /// Two stock rows and four orderlines in warehouse 1: `s1, ol1, ol2`
    /// share item 1 and `s2, ol3, ol4` share item 2.
    pub fn four_rows() -> Database {
        Database {
            stock: vec![stock(1, 10), stock(2, 20)],
            orderlines: vec![
                orderline(1, 1, 1),
                orderline(1, 2, 1),
                orderline(2, 1, 2),
                orderline(2, 2, 2),
            ],
        }
    }
}
