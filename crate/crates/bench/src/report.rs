//! Measured rows, their frozen CSV form, ratio tables and space tables.

use std::io::Write;

use mergeidx::{
    Backend, IncludedColumns, JoinType, MetricsCounters, SpaceReport, Structure, StructureKind,
};
use serde::{Deserialize, Serialize};

use crate::config::{BufferSize, ExperimentConfig, Phase};
use crate::error::Result;

/// Result of one experiment. The JSON form is this struct as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    /// Rows loaded, queries run, or deltas applied.
    pub ops: u64,
    /// Join rows produced by the measured queries.
    pub rows_out: u64,
    /// Largest buffered key group seen by any measured query.
    pub peak_buffered: u64,
    pub counters: MetricsCounters,
    pub primary_space: SpaceReport,
    /// Support indexes of a materialized view; zero otherwise.
    pub support_space: SpaceReport,
    /// Wall clock of the measured phase. Never written to CSV.
    pub elapsed_ms: f64,
}

fn per_op(value: u64, ops: u64) -> f64 {
    if ops == 0 {
        0.0
    } else {
        value as f64 / ops as f64
    }
}

impl MetricsReport {
    pub fn traversals_per_op(&self) -> f64 {
        per_op(self.counters.root_to_leaf_traversals, self.ops)
    }

    pub fn node_accesses_per_op(&self) -> f64 {
        per_op(self.counters.node_accesses(), self.ops)
    }

    pub fn misses_per_op(&self) -> f64 {
        per_op(self.counters.buffer_misses, self.ops)
    }

    pub fn bytes_scanned_per_op(&self) -> f64 {
        per_op(self.counters.bytes_read, self.ops)
    }

    pub fn read_share(&self) -> f64 {
        self.counters.read_share()
    }

    pub fn csv_row(&self) -> CsvRow {
        let c = &self.config;
        let w = c.effective_workload();
        let k = &self.counters;
        CsvRow {
            backend: c.backend,
            buffer: c.buffer,
            so: fixed(c.so),
            jt: c.jt,
            policy: c.policy,
            structure: c.structure,
            phase: c.phase,
            view_join: match c.structure {
                StructureKind::Matview => c.stored_view_join().name(),
                _ => "",
            },
            warehouses: w.warehouses,
            items_per_warehouse: w.items_per_warehouse,
            orderlines_per_warehouse: w.orderlines_per_warehouse,
            seed: w.seed,
            ops: self.ops,
            rows_out: self.rows_out,
            node_reads: k.node_reads,
            node_writes: k.node_writes,
            buffer_misses: k.buffer_misses,
            disk_writes: k.disk_writes,
            key_comparisons: k.key_comparisons,
            entries_scanned: k.entries_scanned,
            bytes_read: k.bytes_read,
            bytes_written: k.bytes_written,
            root_to_leaf_traversals: k.root_to_leaf_traversals,
            searches: k.searches,
            mutations: k.mutations,
            peak_buffered: self.peak_buffered,
            traversals_per_op: fixed(self.traversals_per_op()),
            node_accesses_per_op: fixed(self.node_accesses_per_op()),
            misses_per_op: fixed(self.misses_per_op()),
            bytes_scanned_per_op: fixed(self.bytes_scanned_per_op()),
            read_share: fixed(self.read_share()),
            entry_count: self.primary_space.entry_count,
            payload_bytes: self.primary_space.payload_bytes,
            allocated_bytes: self.primary_space.allocated_bytes,
            support_entry_count: self.support_space.entry_count,
            support_payload_bytes: self.support_space.payload_bytes,
            support_allocated_bytes: self.support_space.allocated_bytes,
        }
    }
}

/// Fixed six-decimal rendering keeps CSV output byte-stable.
fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

/// One CSV line. Column order is frozen; append new columns at the end.
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    pub backend: Backend,
    pub buffer: BufferSize,
    pub so: String,
    pub jt: JoinType,
    pub policy: IncludedColumns,
    pub structure: StructureKind,
    pub phase: Phase,
    pub view_join: &'static str,
    pub warehouses: u32,
    pub items_per_warehouse: u32,
    pub orderlines_per_warehouse: u32,
    pub seed: u64,
    pub ops: u64,
    pub rows_out: u64,
    pub node_reads: u64,
    pub node_writes: u64,
    pub buffer_misses: u64,
    pub disk_writes: u64,
    pub key_comparisons: u64,
    pub entries_scanned: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub root_to_leaf_traversals: u64,
    pub searches: u64,
    pub mutations: u64,
    pub peak_buffered: u64,
    pub traversals_per_op: String,
    pub node_accesses_per_op: String,
    pub misses_per_op: String,
    pub bytes_scanned_per_op: String,
    pub read_share: String,
    pub entry_count: u64,
    pub payload_bytes: u64,
    pub allocated_bytes: u64,
    pub support_entry_count: u64,
    pub support_payload_bytes: u64,
    pub support_allocated_bytes: u64,
}

pub fn write_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r.csv_row())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_json<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, reports)?;
    Ok(())
}

/// Accesses-per-op of the baselines divided by the merged index's, for one
/// structure-independent grid point. Above 1 means the merged index needs
/// fewer node accesses.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub backend: Backend,
    pub buffer: BufferSize,
    pub so: String,
    pub jt: JoinType,
    pub policy: IncludedColumns,
    pub phase: Phase,
    pub merged_accesses_per_op: String,
    pub traditional_accesses_per_op: String,
    pub matview_accesses_per_op: String,
    pub merged_vs_traditional: String,
    pub merged_vs_matview: String,
}

fn same_point(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    a.backend == b.backend
        && a.buffer == b.buffer
        && a.so == b.so
        && a.jt == b.jt
        && a.policy == b.policy
        && a.phase == b.phase
        && a.workload == b.workload
}

/// One row per merged-index report, in report order. Missing baselines
/// leave their cells empty.
pub fn ratio_table(reports: &[MetricsReport]) -> Vec<RatioRow> {
    let find = |cfg: &ExperimentConfig, kind: StructureKind| {
        reports
            .iter()
            .find(|r| r.config.structure == kind && same_point(&r.config, cfg))
            .map(MetricsReport::node_accesses_per_op)
    };
    let cell = |x: Option<f64>| x.map(fixed).unwrap_or_default();
    let ratio = |base: Option<f64>, merged: f64| match base {
        Some(b) if merged > 0.0 => fixed(b / merged),
        _ => String::new(),
    };
    reports
        .iter()
        .filter(|r| r.config.structure == StructureKind::Merged)
        .map(|m| {
            let c = &m.config;
            let merged = m.node_accesses_per_op();
            let traditional = find(c, StructureKind::Traditional);
            let matview = find(c, StructureKind::Matview);
            RatioRow {
                backend: c.backend,
                buffer: c.buffer,
                so: fixed(c.so),
                jt: c.jt,
                policy: c.policy,
                phase: c.phase,
                merged_accesses_per_op: fixed(merged),
                traditional_accesses_per_op: cell(traditional),
                matview_accesses_per_op: cell(matview),
                merged_vs_traditional: ratio(traditional, merged),
                merged_vs_matview: ratio(matview, merged),
            }
        })
        .collect()
}

/// Space of one loaded structure. For a materialized view the support
/// indexes are the net addition over the view itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpaceRow {
    pub structure: StructureKind,
    pub backend: Backend,
    pub entry_count: u64,
    pub payload_bytes: u64,
    pub allocated_bytes: u64,
    pub net_addition_payload_bytes: u64,
    pub net_addition_allocated_bytes: u64,
}

impl SpaceRow {
    fn new(
        structure: StructureKind,
        backend: Backend,
        primary: SpaceReport,
        support: SpaceReport,
    ) -> Self {
        SpaceRow {
            structure,
            backend,
            entry_count: primary.entry_count,
            payload_bytes: primary.payload_bytes,
            allocated_bytes: primary.allocated_bytes,
            net_addition_payload_bytes: support.payload_bytes,
            net_addition_allocated_bytes: support.allocated_bytes,
        }
    }
}

pub fn report_space(structures: &[&Structure]) -> Vec<SpaceRow> {
    structures
        .iter()
        .map(|s| SpaceRow::new(s.kind(), s.backend(), s.primary_space(), s.support_space()))
        .collect()
}

/// A space row with the grid point it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpaceRow {
    pub backend: Backend,
    pub buffer: BufferSize,
    pub so: String,
    pub jt: JoinType,
    pub policy: IncludedColumns,
    pub structure: StructureKind,
    pub entry_count: u64,
    pub payload_bytes: u64,
    pub allocated_bytes: u64,
    pub net_addition_payload_bytes: u64,
    pub net_addition_allocated_bytes: u64,
}

/// Space rows taken from the load-phase reports of a grid.
pub fn space_from_reports(reports: &[MetricsReport]) -> Vec<GridSpaceRow> {
    reports
        .iter()
        .filter(|r| r.config.phase == Phase::Load)
        .map(|r| {
            let c = &r.config;
            GridSpaceRow {
                backend: c.backend,
                buffer: c.buffer,
                so: fixed(c.so),
                jt: c.jt,
                policy: c.policy,
                structure: c.structure,
                entry_count: r.primary_space.entry_count,
                payload_bytes: r.primary_space.payload_bytes,
                allocated_bytes: r.primary_space.allocated_bytes,
                net_addition_payload_bytes: r.support_space.payload_bytes,
                net_addition_allocated_bytes: r.support_space.allocated_bytes,
            }
        })
        .collect()
}

pub fn write_table<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
