//! Comparison structures: twin single-table indexes joined by an index-based
//! merge join, and a materialized join view kept fresh by incremental
//! maintenance.

pub mod matview;
pub mod traditional;

pub use matview::MaterializedJoinView;
pub use traditional::TraditionalIndexes;
