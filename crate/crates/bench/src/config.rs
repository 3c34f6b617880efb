//! One point of the experiment grid.

use std::fmt;
use std::str::FromStr;

use mergeidx::store::{LARGE_BUFFER_PAGES, SMALL_BUFFER_PAGES};
use mergeidx::{Backend, IncludedColumns, JoinType, StructureKind, WorkloadConfig};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Buffer pool capacity regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferSize {
    /// Smaller than the default database: scans miss.
    Small,
    /// Holds every structure of the default database.
    Large,
}

impl BufferSize {
    pub const ALL: [BufferSize; 2] = [BufferSize::Small, BufferSize::Large];

    pub fn pages(self) -> usize {
        match self {
            BufferSize::Small => SMALL_BUFFER_PAGES,
            BufferSize::Large => LARGE_BUFFER_PAGES,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BufferSize::Small => "small",
            BufferSize::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Bulk load from generated rows.
    Load,
    /// Point joins on one stock key.
    Point,
    /// Joins over one warehouse.
    Scan,
    /// New-order transactions.
    Update,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Load, Phase::Point, Phase::Scan, Phase::Update];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Load => "load",
            Phase::Point => "point",
            Phase::Scan => "scan",
            Phase::Update => "update",
        }
    }
}

macro_rules! name_impls {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                <$t>::ALL
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| format!("unknown {} `{s}`", stringify!($t)))
            }
        }
    )*};
}

name_impls!(BufferSize, Phase);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub backend: Backend,
    pub buffer: BufferSize,
    pub so: f64,
    pub jt: JoinType,
    pub policy: IncludedColumns,
    pub structure: StructureKind,
    pub phase: Phase,
    /// Table sizes and seed; its `so` and `policy` are replaced by the fields above.
    pub workload: WorkloadConfig,
    /// Operations in the measured phase; ignored by `load`.
    pub ops: usize,
    /// Join type a materialized view stores; defaults to `jt`.
    pub view_join: Option<JoinType>,
}

impl ExperimentConfig {
    pub fn new(structure: StructureKind, phase: Phase) -> Self {
        ExperimentConfig {
            backend: Backend::BTree,
            buffer: BufferSize::Small,
            so: 1.0,
            jt: JoinType::Inner,
            policy: IncludedColumns::Covering,
            structure,
            phase,
            workload: WorkloadConfig::default(),
            ops: 100,
            view_join: None,
        }
    }

    /// The workload actually generated.
    pub fn effective_workload(&self) -> WorkloadConfig {
        WorkloadConfig {
            so: self.so,
            policy: self.policy,
            ..self.workload
        }
    }

    pub fn stored_view_join(&self) -> JoinType {
        self.view_join.unwrap_or(self.jt)
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_workload()
            .validate()
            .map_err(BenchError::Config)?;
        if self.structure == StructureKind::Matview {
            let stored = self.stored_view_join();
            if !matches!(stored, JoinType::Inner | JoinType::FullOuter) {
                return Err(BenchError::Config(format!(
                    "a materialized view stores inner or full_outer, not {stored}"
                )));
            }
            if stored == JoinType::Inner
                && (self.jt.preserves_orderline() || self.jt.preserves_stock())
            {
                return Err(BenchError::Config(format!(
                    "an inner materialized view cannot serve {}",
                    self.jt
                )));
            }
        }
        Ok(())
    }
}
