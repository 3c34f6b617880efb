//! Paged b+-tree with a doubly linked leaf chain.
//!
//! Nodes are sized in bytes against the page size. Overflowing nodes split at
//! the byte midpoint; leaves that become empty are freed and unlinked, but
//! underfull nodes are never merged.

use std::cell::RefCell;

use super::buffer::{PageId, SharedPool};
use super::{
    search_by, unsupported_compaction, DeleteOutcome, Entry, MetricsCounters, OrderedStore,
    RewriteFn, Scan, SpaceReport,
};
use crate::error::Result;

const NODE_HEADER: usize = 24;
/// Key length, value length and slot offset.
const LEAF_SLOT: usize = 6;
/// Key length, slot offset and child page number.
const INTERNAL_SLOT: usize = 8;
const CHILD_PTR: usize = 4;

type NodeId = u32;

#[derive(Debug)]
struct Leaf {
    entries: Vec<Entry>,
    bytes: usize,
    prev: Option<NodeId>,
    next: Option<NodeId>,
}

#[derive(Debug)]
struct Internal {
    /// `keys[j]` separates `children[j]` (strictly smaller keys) from
    /// `children[j + 1]`.
    keys: Vec<Vec<u8>>,
    children: Vec<NodeId>,
    bytes: usize,
}

#[derive(Debug)]
enum Node {
    Leaf(Leaf),
    Internal(Internal),
}

fn leaf_cost(key: &[u8], value: &[u8]) -> usize {
    key.len() + value.len() + LEAF_SLOT
}

fn internal_cost(key: &[u8]) -> usize {
    key.len() + INTERNAL_SLOT
}

impl Leaf {
    fn empty() -> Self {
        Leaf {
            entries: Vec::new(),
            bytes: NODE_HEADER,
            prev: None,
            next: None,
        }
    }

    fn from_entries(entries: Vec<Entry>) -> Self {
        let bytes = NODE_HEADER + entries.iter().map(|(k, v)| leaf_cost(k, v)).sum::<usize>();
        Leaf {
            entries,
            bytes,
            prev: None,
            next: None,
        }
    }
}

impl Internal {
    fn new(keys: Vec<Vec<u8>>, children: Vec<NodeId>) -> Self {
        let bytes = NODE_HEADER + CHILD_PTR + keys.iter().map(|k| internal_cost(k)).sum::<usize>();
        Internal {
            keys,
            children,
            bytes,
        }
    }
}

/// Shape summary used by tests and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BTreeShape {
    pub height: usize,
    pub leaves: usize,
    pub internal_nodes: usize,
}

pub struct BTree {
    id: u32,
    pool: SharedPool,
    page_size: usize,
    nodes: Vec<Option<Node>>,
    free: Vec<NodeId>,
    root: NodeId,
    /// Number of levels; 1 when the root is a leaf.
    height: usize,
    live_nodes: usize,
    entry_count: u64,
    payload_bytes: u64,
    counters: RefCell<MetricsCounters>,
}

impl BTree {
    pub fn new(page_size: usize, pool: SharedPool) -> Self {
        let id = pool.borrow_mut().register_store();
        let mut tree = BTree {
            id,
            pool,
            page_size,
            nodes: Vec::new(),
            free: Vec::new(),
            root: 0,
            height: 1,
            live_nodes: 0,
            entry_count: 0,
            payload_bytes: 0,
            counters: RefCell::new(MetricsCounters::default()),
        };
        tree.root = tree.alloc(Node::Leaf(Leaf::empty()));
        tree.counters.borrow_mut().node_writes = 0;
        tree
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn page(&self, node: NodeId) -> PageId {
        PageId {
            store: self.id,
            page: node,
        }
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        let id = match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                (self.nodes.len() - 1) as NodeId
            }
        };
        self.live_nodes += 1;
        self.pool.borrow_mut().install(self.page(id));
        self.counters.borrow_mut().node_writes += 1;
        id
    }

    fn release(&mut self, id: NodeId) {
        self.nodes[id as usize] = None;
        self.free.push(id);
        self.live_nodes -= 1;
        self.pool.borrow_mut().discard(self.page(id));
    }

    fn node(&self, id: NodeId) -> &Node {
        self.nodes[id as usize].as_ref().expect("live node")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id as usize].as_mut().expect("live node")
    }

    fn leaf(&self, id: NodeId) -> &Leaf {
        match self.node(id) {
            Node::Leaf(l) => l,
            Node::Internal(_) => panic!("node {id} is not a leaf"),
        }
    }

    fn leaf_mut(&mut self, id: NodeId) -> &mut Leaf {
        match self.node_mut(id) {
            Node::Leaf(l) => l,
            Node::Internal(_) => panic!("node {id} is not a leaf"),
        }
    }

    fn internal_mut(&mut self, id: NodeId) -> &mut Internal {
        match self.node_mut(id) {
            Node::Internal(n) => n,
            Node::Leaf(_) => panic!("node {id} is not internal"),
        }
    }

    fn read_page(&self, id: NodeId) {
        let miss = self.pool.borrow_mut().read(self.page(id));
        let mut c = self.counters.borrow_mut();
        c.node_reads += 1;
        if miss {
            c.buffer_misses += 1;
        }
    }

    fn write_page(&self, id: NodeId) {
        let miss = self.pool.borrow_mut().write(self.page(id));
        let mut c = self.counters.borrow_mut();
        c.node_writes += 1;
        if miss {
            // the page has to be fetched before it can be modified
            c.node_reads += 1;
            c.buffer_misses += 1;
        }
    }

    /// Root-to-leaf descent. Returns `(internal node, child index)` pairs and
    /// the leaf reached.
    fn descend(&self, key: &[u8]) -> (Vec<(NodeId, usize)>, NodeId) {
        self.counters.borrow_mut().root_to_leaf_traversals += 1;
        let mut path = Vec::with_capacity(self.height);
        let mut id = self.root;
        let mut comparisons = 0;
        loop {
            self.read_page(id);
            match self.node(id) {
                Node::Leaf(_) => break,
                Node::Internal(n) => {
                    let idx = match search_by(&n.keys, key, |k| k.as_slice(), &mut comparisons) {
                        Ok(i) => i + 1,
                        Err(i) => i,
                    };
                    path.push((id, idx));
                    id = n.children[idx];
                }
            }
        }
        self.counters.borrow_mut().key_comparisons += comparisons;
        (path, id)
    }

    fn search_leaf(&self, leaf: NodeId, key: &[u8]) -> std::result::Result<usize, usize> {
        let mut comparisons = 0;
        let r = search_by(
            &self.leaf(leaf).entries,
            key,
            |e| e.0.as_slice(),
            &mut comparisons,
        );
        self.counters.borrow_mut().key_comparisons += comparisons;
        r
    }

    fn split_if_needed(&mut self, mut path: Vec<(NodeId, usize)>, leaf_id: NodeId) {
        if self.leaf(leaf_id).bytes <= self.page_size {
            return;
        }
        let (separator, right_id) = self.split_leaf(leaf_id);
        let mut pending = Some((separator, right_id));
        while let Some((sep, right)) = pending.take() {
            match path.pop() {
                Some((parent, idx)) => {
                    {
                        let p = self.internal_mut(parent);
                        p.bytes += internal_cost(&sep);
                        p.keys.insert(idx, sep);
                        p.children.insert(idx + 1, right);
                    }
                    self.write_page(parent);
                    let over = match self.node(parent) {
                        Node::Internal(p) => p.bytes > self.page_size && p.keys.len() >= 3,
                        Node::Leaf(_) => unreachable!(),
                    };
                    if over {
                        pending = Some(self.split_internal(parent));
                    }
                }
                None => {
                    let old_root = self.root;
                    let root = Internal::new(vec![sep], vec![old_root, right]);
                    self.root = self.alloc(Node::Internal(root));
                    self.height += 1;
                }
            }
        }
    }

    /// Splits at the byte midpoint; returns the separator and new right node.
    fn split_leaf(&mut self, id: NodeId) -> (Vec<u8>, NodeId) {
        let (right_entries, old_next) = {
            let leaf = self.leaf_mut(id);
            let half = leaf.bytes / 2;
            let mut acc = NODE_HEADER;
            let mut cut = leaf.entries.len() - 1;
            for (i, (k, v)) in leaf.entries.iter().enumerate() {
                acc += leaf_cost(k, v);
                if acc >= half {
                    cut = (i + 1).min(leaf.entries.len() - 1).max(1);
                    break;
                }
            }
            let right: Vec<Entry> = leaf.entries.split_off(cut);
            leaf.bytes = NODE_HEADER
                + leaf
                    .entries
                    .iter()
                    .map(|(k, v)| leaf_cost(k, v))
                    .sum::<usize>();
            (right, leaf.next)
        };
        let separator = right_entries[0].0.clone();
        let mut right = Leaf::from_entries(right_entries);
        right.prev = Some(id);
        right.next = old_next;
        let right_id = self.alloc(Node::Leaf(right));
        self.leaf_mut(id).next = Some(right_id);
        if let Some(n) = old_next {
            self.leaf_mut(n).prev = Some(right_id);
            self.write_page(n);
        }
        (separator, right_id)
    }

    fn split_internal(&mut self, id: NodeId) -> (Vec<u8>, NodeId) {
        let (promoted, right) = {
            let node = self.internal_mut(id);
            let half = node.bytes / 2;
            let mut acc = NODE_HEADER + CHILD_PTR;
            let mut mid = node.keys.len() / 2;
            for (i, k) in node.keys.iter().enumerate() {
                acc += internal_cost(k);
                if acc >= half {
                    mid = i.clamp(1, node.keys.len() - 2);
                    break;
                }
            }
            let right_keys = node.keys.split_off(mid + 1);
            let promoted = node.keys.pop().expect("separator");
            let right_children = node.children.split_off(mid + 1);
            node.bytes =
                NODE_HEADER + CHILD_PTR + node.keys.iter().map(|k| internal_cost(k)).sum::<usize>();
            (promoted, Internal::new(right_keys, right_children))
        };
        let right_id = self.alloc(Node::Internal(right));
        (promoted, right_id)
    }

    /// Removes an empty leaf and any ancestors left without children.
    fn free_empty_leaf(&mut self, mut path: Vec<(NodeId, usize)>, leaf_id: NodeId) {
        let (prev, next) = {
            let l = self.leaf(leaf_id);
            (l.prev, l.next)
        };
        if let Some(p) = prev {
            self.leaf_mut(p).next = next;
            self.write_page(p);
        }
        if let Some(n) = next {
            self.leaf_mut(n).prev = prev;
            self.write_page(n);
        }
        self.release(leaf_id);
        while let Some((parent, idx)) = path.pop() {
            let now_empty = {
                let p = self.internal_mut(parent);
                p.children.remove(idx);
                if !p.keys.is_empty() {
                    let k = p.keys.remove(idx.saturating_sub(1));
                    p.bytes -= internal_cost(&k);
                }
                p.children.is_empty()
            };
            if now_empty && !path.is_empty() {
                self.release(parent);
                continue;
            }
            if now_empty {
                // root lost its last child
                self.release(parent);
                self.root = self.alloc(Node::Leaf(Leaf::empty()));
                self.height = 1;
                return;
            }
            self.write_page(parent);
            break;
        }
        self.collapse_root();
    }

    fn collapse_root(&mut self) {
        loop {
            let only_child = match self.node(self.root) {
                Node::Internal(n) if n.children.len() == 1 => n.children[0],
                _ => return,
            };
            let old = self.root;
            self.root = only_child;
            self.height -= 1;
            self.release(old);
        }
    }

    fn first_leaf(&self) -> NodeId {
        let mut id = self.root;
        loop {
            match self.node(id) {
                Node::Leaf(_) => return id,
                Node::Internal(n) => id = n.children[0],
            }
        }
    }

    /// Builds the tree bottom-up from sorted unique entries. Only valid on an
    /// empty tree.
    fn build_from_sorted(&mut self, entries: Vec<Entry>) {
        if entries.is_empty() {
            return;
        }
        let old_root = self.root;
        self.release(old_root);

        // pack leaves
        let mut groups: Vec<Vec<Entry>> = Vec::new();
        let mut current: Vec<Entry> = Vec::new();
        let mut bytes = NODE_HEADER;
        let limit = self.page_size * LEAF_FILL_PERCENT / 100;
        for (k, v) in entries {
            let cost = leaf_cost(&k, &v);
            if !current.is_empty() && bytes + cost > limit {
                groups.push(std::mem::take(&mut current));
                bytes = NODE_HEADER;
            }
            bytes += cost;
            current.push((k, v));
        }
        groups.push(current);
        rebalance_tail(&mut groups, self.page_size, NODE_HEADER, |(k, v)| {
            leaf_cost(k, v)
        });

        let mut level: Vec<(Vec<u8>, NodeId)> = Vec::with_capacity(groups.len());
        let mut prev: Option<NodeId> = None;
        for group in groups {
            let min = group[0].0.clone();
            let mut leaf = Leaf::from_entries(group);
            leaf.prev = prev;
            let id = self.alloc(Node::Leaf(leaf));
            if let Some(p) = prev {
                self.leaf_mut(p).next = Some(id);
            }
            prev = Some(id);
            level.push((min, id));
        }
        let mut height = 1;
        while level.len() > 1 {
            let mut groups: Vec<Vec<(Vec<u8>, NodeId)>> = Vec::new();
            let mut current = Vec::new();
            let mut bytes = NODE_HEADER;
            for item in level {
                let cost = if current.is_empty() {
                    CHILD_PTR
                } else {
                    internal_cost(&item.0)
                };
                if current.len() >= 2 && bytes + cost > self.page_size {
                    groups.push(std::mem::take(&mut current));
                    bytes = NODE_HEADER + CHILD_PTR;
                } else {
                    bytes += cost;
                }
                current.push(item);
            }
            groups.push(current);
            rebalance_tail(
                &mut groups,
                self.page_size,
                NODE_HEADER + CHILD_PTR,
                |(k, _)| internal_cost(k),
            );
            let mut next_level = Vec::with_capacity(groups.len());
            for group in groups {
                let min = group[0].0.clone();
                let keys = group.iter().skip(1).map(|(k, _)| k.clone()).collect();
                let children = group.iter().map(|(_, id)| *id).collect();
                let id = self.alloc(Node::Internal(Internal::new(keys, children)));
                next_level.push((min, id));
            }
            level = next_level;
            height += 1;
        }
        self.root = level[0].1;
        self.height = height;
    }

    pub fn shape(&self) -> BTreeShape {
        let mut leaves = 0;
        let mut internal = 0;
        for n in self.nodes.iter().flatten() {
            match n {
                Node::Leaf(_) => leaves += 1,
                Node::Internal(_) => internal += 1,
            }
        }
        BTreeShape {
            height: self.height,
            leaves,
            internal_nodes: internal,
        }
    }

    /// Structural validation walk: equal leaf depth, sorted keys, separator
    /// bounds, a consistent leaf chain, and, when `check_occupancy` is set,
    /// every non-root node at least half full up to one entry.
    pub fn validate(&self, check_occupancy: bool) -> std::result::Result<(), String> {
        let mut leaves_in_order = Vec::new();
        let mut max_leaf_entry = 0usize;
        let mut max_key = 0usize;
        for n in self.nodes.iter().flatten() {
            match n {
                Node::Leaf(l) => {
                    for (k, v) in &l.entries {
                        max_leaf_entry = max_leaf_entry.max(leaf_cost(k, v));
                    }
                }
                Node::Internal(i) => {
                    for k in &i.keys {
                        max_key = max_key.max(internal_cost(k));
                    }
                }
            }
        }
        self.validate_node(
            self.root,
            1,
            None,
            None,
            &mut leaves_in_order,
            check_occupancy,
            (max_leaf_entry, max_key),
        )?;
        // leaf chain agrees with in-order traversal
        let mut chain = Vec::new();
        let mut cur = Some(self.first_leaf());
        let mut prev = None;
        while let Some(id) = cur {
            let l = self.leaf(id);
            if l.prev != prev {
                return Err(format!(
                    "leaf {id} has prev {:?}, expected {prev:?}",
                    l.prev
                ));
            }
            chain.push(id);
            prev = Some(id);
            cur = l.next;
        }
        if chain != leaves_in_order {
            return Err("leaf chain differs from tree order".into());
        }
        let mut count = 0u64;
        let mut bytes = 0u64;
        let mut last: Option<&[u8]> = None;
        for id in chain {
            for (k, v) in &self.leaf(id).entries {
                if let Some(prev) = last {
                    if prev >= k.as_slice() {
                        return Err("keys not strictly ascending along the chain".into());
                    }
                }
                last = Some(k);
                count += 1;
                bytes += (k.len() + v.len()) as u64;
            }
        }
        if count != self.entry_count || bytes != self.payload_bytes {
            return Err("entry accounting drifted".into());
        }
        let live = self.nodes.iter().flatten().count();
        if live != self.live_nodes {
            return Err("live node count drifted".into());
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn validate_node(
        &self,
        id: NodeId,
        depth: usize,
        low: Option<&[u8]>,
        high: Option<&[u8]>,
        leaves: &mut Vec<NodeId>,
        check_occupancy: bool,
        max_cost: (usize, usize),
    ) -> std::result::Result<(), String> {
        let is_root = id == self.root;
        let in_bounds = |k: &[u8]| low.is_none_or(|l| k >= l) && high.is_none_or(|h| k < h);
        match self.node(id) {
            Node::Leaf(l) => {
                if depth != self.height {
                    return Err(format!(
                        "leaf {id} at depth {depth}, height {}",
                        self.height
                    ));
                }
                if l.entries.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(format!("leaf {id} keys unsorted"));
                }
                if !l.entries.iter().all(|(k, _)| in_bounds(k)) {
                    return Err(format!("leaf {id} key outside separator bounds"));
                }
                let expect = NODE_HEADER
                    + l.entries
                        .iter()
                        .map(|(k, v)| leaf_cost(k, v))
                        .sum::<usize>();
                if expect != l.bytes {
                    return Err(format!("leaf {id} byte count drifted"));
                }
                if !is_root && l.entries.is_empty() {
                    return Err(format!("empty non-root leaf {id}"));
                }
                if check_occupancy && !is_root && l.bytes + max_cost.0 < self.page_size / 2 {
                    return Err(format!("leaf {id} underfull: {} bytes", l.bytes));
                }
                if l.bytes > self.page_size && l.entries.len() > 1 {
                    return Err(format!("leaf {id} overflows its page"));
                }
                leaves.push(id);
            }
            Node::Internal(n) => {
                if n.children.len() != n.keys.len() + 1 {
                    return Err(format!("internal {id} has mismatched keys/children"));
                }
                if n.keys.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(format!("internal {id} keys unsorted"));
                }
                if !n.keys.iter().all(|k| in_bounds(k)) {
                    return Err(format!("internal {id} key outside bounds"));
                }
                if check_occupancy && !is_root && n.bytes + max_cost.1 < self.page_size / 2 {
                    return Err(format!("internal {id} underfull: {} bytes", n.bytes));
                }
                for (i, &child) in n.children.iter().enumerate() {
                    let lo = if i == 0 {
                        low
                    } else {
                        Some(n.keys[i - 1].as_slice())
                    };
                    let hi = if i == n.keys.len() {
                        high
                    } else {
                        Some(n.keys[i].as_slice())
                    };
                    self.validate_node(
                        child,
                        depth + 1,
                        lo,
                        hi,
                        leaves,
                        check_occupancy,
                        max_cost,
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Evens out an underfull last group with its predecessor.
/// Bulk-built leaves stop at this share of a page so that the first insert
/// into a leaf does not split it.
const LEAF_FILL_PERCENT: usize = 90;

fn rebalance_tail<T>(
    groups: &mut Vec<Vec<T>>,
    page_size: usize,
    base: usize,
    cost: impl Fn(&T) -> usize,
) {
    if groups.len() < 2 {
        return;
    }
    let last_bytes = base + groups.last().unwrap().iter().map(&cost).sum::<usize>();
    if last_bytes * 2 >= page_size {
        return;
    }
    let tail = groups.pop().unwrap();
    let mut merged = groups.pop().unwrap();
    merged.extend(tail);
    let total: usize = merged.iter().map(&cost).sum();
    let mut acc = 0;
    let mut cut = merged.len() / 2;
    for (i, item) in merged.iter().enumerate() {
        acc += cost(item);
        if acc * 2 >= total {
            cut = (i + 1).clamp(1, merged.len() - 1);
            break;
        }
    }
    let right = merged.split_off(cut);
    groups.push(merged);
    groups.push(right);
}

impl OrderedStore for BTree {
    fn put(&mut self, key: &[u8], value: &[u8]) {
        assert!(
            leaf_cost(key, value) + NODE_HEADER <= self.page_size / 2,
            "entry of {} bytes exceeds half a page",
            key.len() + value.len()
        );
        let (path, leaf_id) = self.descend(key);
        let pos = self.search_leaf(leaf_id, key);
        {
            let leaf = self.leaf_mut(leaf_id);
            match pos {
                Ok(i) => {
                    let old = std::mem::replace(&mut leaf.entries[i].1, value.to_vec());
                    leaf.bytes = leaf.bytes + value.len() - old.len();
                    self.payload_bytes = self.payload_bytes + value.len() as u64 - old.len() as u64;
                }
                Err(i) => {
                    leaf.bytes += leaf_cost(key, value);
                    leaf.entries.insert(i, (key.to_vec(), value.to_vec()));
                    self.entry_count += 1;
                    self.payload_bytes += (key.len() + value.len()) as u64;
                }
            }
        }
        {
            let mut c = self.counters.borrow_mut();
            c.mutations += 1;
            c.bytes_written += (key.len() + value.len()) as u64;
        }
        self.write_page(leaf_id);
        self.split_if_needed(path, leaf_id);
    }

    fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.counters.borrow_mut().searches += 1;
        let (_, leaf_id) = self.descend(key);
        let i = self.search_leaf(leaf_id, key).ok()?;
        let (k, v) = &self.leaf(leaf_id).entries[i];
        let mut c = self.counters.borrow_mut();
        c.entries_scanned += 1;
        c.bytes_read += (k.len() + v.len()) as u64;
        Some(v.clone())
    }

    fn delete(&mut self, key: &[u8]) -> DeleteOutcome {
        let (path, leaf_id) = self.descend(key);
        let Ok(i) = self.search_leaf(leaf_id, key) else {
            return DeleteOutcome::Absent;
        };
        let now_empty = {
            let leaf = self.leaf_mut(leaf_id);
            let (k, v) = leaf.entries.remove(i);
            leaf.bytes -= leaf_cost(&k, &v);
            let empty = leaf.entries.is_empty();
            self.entry_count -= 1;
            self.payload_bytes -= (k.len() + v.len()) as u64;
            empty
        };
        self.counters.borrow_mut().mutations += 1;
        self.write_page(leaf_id);
        if now_empty && leaf_id != self.root {
            self.free_empty_leaf(path, leaf_id);
        }
        DeleteOutcome::Removed
    }

    fn update(&mut self, key: &[u8], f: &mut dyn FnMut(&[u8]) -> Vec<u8>) -> bool {
        let (path, leaf_id) = self.descend(key);
        let Ok(i) = self.search_leaf(leaf_id, key) else {
            return false;
        };
        let (old_len, new_len) = {
            let leaf = self.leaf_mut(leaf_id);
            let new = f(&leaf.entries[i].1);
            let old = std::mem::replace(&mut leaf.entries[i].1, new);
            let new_len = leaf.entries[i].1.len();
            leaf.bytes = leaf.bytes + new_len - old.len();
            (old.len(), new_len)
        };
        assert!(
            leaf_cost(key, &vec![0; new_len]) + NODE_HEADER <= self.page_size / 2,
            "entry exceeds half a page"
        );
        self.payload_bytes = self.payload_bytes + new_len as u64 - old_len as u64;
        {
            let mut c = self.counters.borrow_mut();
            c.mutations += 1;
            c.entries_scanned += 1;
            c.bytes_read += (key.len() + old_len) as u64;
            c.bytes_written += (key.len() + new_len) as u64;
        }
        self.write_page(leaf_id);
        self.split_if_needed(path, leaf_id);
        true
    }

    fn update_range(&mut self, lower: &[u8], upper: Option<&[u8]>, f: &mut RewriteFn<'_>) -> usize {
        let (_, mut leaf_id) = self.descend(lower);
        let mut pos = match self.search_leaf(leaf_id, lower) {
            Ok(i) | Err(i) => i,
        };
        let mut rewritten = 0;
        let mut deferred: Vec<Entry> = Vec::new();
        let mut dirty = false;
        loop {
            if pos >= self.leaf(leaf_id).entries.len() {
                if dirty {
                    self.write_page(leaf_id);
                    dirty = false;
                }
                match self.leaf(leaf_id).next {
                    Some(n) => {
                        leaf_id = n;
                        pos = 0;
                        self.read_page(n);
                        continue;
                    }
                    None => break,
                }
            }
            let page_size = self.page_size;
            let mut c = self.counters.borrow_mut();
            let leaf = match self.nodes[leaf_id as usize].as_mut() {
                Some(Node::Leaf(l)) => l,
                _ => unreachable!(),
            };
            let (k, v) = &leaf.entries[pos];
            if let Some(u) = upper {
                c.key_comparisons += 1;
                if k.as_slice() >= u {
                    drop(c);
                    break;
                }
            }
            c.entries_scanned += 1;
            c.bytes_read += (k.len() + v.len()) as u64;
            if let Some(new) = f(k, v) {
                rewritten += 1;
                c.mutations += 1;
                c.bytes_written += (k.len() + new.len()) as u64;
                let grown = leaf.bytes + new.len() - v.len();
                if grown <= page_size {
                    let old_len = v.len();
                    leaf.bytes = grown;
                    self.payload_bytes = self.payload_bytes + new.len() as u64 - old_len as u64;
                    leaf.entries[pos].1 = new;
                    dirty = true;
                } else {
                    deferred.push((k.clone(), new));
                }
            }
            pos += 1;
        }
        if dirty {
            self.write_page(leaf_id);
        }
        for (k, v) in deferred {
            // rare: the new value no longer fits in place
            self.put(&k, &v);
            self.counters.borrow_mut().mutations -= 1;
        }
        rewritten
    }

    fn range_scan<'a>(&'a self, lower: &[u8], upper: Option<&[u8]>) -> Scan<'a> {
        self.counters.borrow_mut().searches += 1;
        let (_, leaf) = self.descend(lower);
        let pos = match self.search_leaf(leaf, lower) {
            Ok(i) | Err(i) => i,
        };
        Box::new(BTreeCursor {
            tree: self,
            leaf: Some(leaf),
            pos,
            upper: upper.map(|u| u.to_vec()),
        })
    }

    fn bulk_load(&mut self, entries: &mut dyn Iterator<Item = Entry>) {
        let mut batch: Vec<Entry> = entries.collect();
        if batch.is_empty() {
            return;
        }
        batch.sort_by(|a, b| a.0.cmp(&b.0));
        // stable sort keeps arrival order among equal keys; keep the last
        let mut unique: Vec<Entry> = Vec::with_capacity(batch.len());
        for e in batch {
            match unique.last_mut() {
                Some(last) if last.0 == e.0 => *last = e,
                _ => unique.push(e),
            }
        }
        {
            let mut c = self.counters.borrow_mut();
            c.key_comparisons +=
                (unique.len() as f64 * (unique.len() as f64).log2().max(1.0)) as u64;
        }
        if self.entry_count == 0 {
            let (count, bytes) = unique.iter().fold((0u64, 0u64), |(n, b), (k, v)| {
                (n + 1, b + (k.len() + v.len()) as u64)
            });
            for (k, v) in &unique {
                assert!(leaf_cost(k, v) + NODE_HEADER <= self.page_size / 2);
            }
            {
                let mut c = self.counters.borrow_mut();
                c.mutations += count;
                c.bytes_written += bytes;
            }
            self.build_from_sorted(unique);
            self.entry_count = count;
            self.payload_bytes = bytes;
        } else {
            for (k, v) in unique {
                self.put(&k, &v);
            }
        }
    }

    fn compact(&mut self) -> Result<()> {
        Err(unsupported_compaction())
    }

    fn is_empty(&self) -> bool {
        self.entry_count == 0
    }

    fn counters(&self) -> MetricsCounters {
        let mut c = *self.counters.borrow();
        c.disk_writes = self.pool.borrow().writebacks(self.id);
        c
    }

    fn space(&self) -> SpaceReport {
        SpaceReport {
            entry_count: self.entry_count,
            payload_bytes: self.payload_bytes,
            allocated_bytes: (self.live_nodes * self.page_size) as u64,
            run_count: 0,
        }
    }

    fn reset_counters(&mut self) {
        *self.counters.borrow_mut() = MetricsCounters::default();
        self.pool.borrow_mut().reset_writebacks(self.id);
    }
}

struct BTreeCursor<'a> {
    tree: &'a BTree,
    leaf: Option<NodeId>,
    pos: usize,
    upper: Option<Vec<u8>>,
}

impl Iterator for BTreeCursor<'_> {
    type Item = Entry;

    fn next(&mut self) -> Option<Entry> {
        loop {
            let id = self.leaf?;
            let leaf = self.tree.leaf(id);
            if self.pos >= leaf.entries.len() {
                self.leaf = leaf.next;
                self.pos = 0;
                if let Some(n) = self.leaf {
                    self.tree.read_page(n);
                }
                continue;
            }
            let (k, v) = &leaf.entries[self.pos];
            let mut c = self.tree.counters.borrow_mut();
            if let Some(u) = &self.upper {
                c.key_comparisons += 1;
                if k >= u {
                    self.leaf = None;
                    return None;
                }
            }
            self.pos += 1;
            c.entries_scanned += 1;
            c.bytes_read += (k.len() + v.len()) as u64;
            return Some((k.clone(), v.clone()));
        }
    }
}
