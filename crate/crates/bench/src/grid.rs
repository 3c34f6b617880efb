//! Declarative experiment grids in TOML.

use std::collections::HashMap;
use std::path::Path;

use mergeidx::workload::generate;
use mergeidx::{Backend, Database, IncludedColumns, JoinType, StructureKind, WorkloadConfig};
use serde::{Deserialize, Serialize};

use crate::config::{BufferSize, ExperimentConfig, Phase};
use crate::error::{BenchError, Result};
use crate::report::MetricsReport;
use crate::runner::run_experiment_on;

/// Operation counts per measured phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseOps {
    pub point: usize,
    pub scan: usize,
    /// New-order transactions.
    pub update: usize,
}

impl Default for PhaseOps {
    fn default() -> Self {
        PhaseOps {
            point: 1_000,
            scan: 10,
            update: 100,
        }
    }
}

impl PhaseOps {
    pub fn of(&self, phase: Phase) -> usize {
        match phase {
            Phase::Load => 0,
            Phase::Point => self.point,
            Phase::Scan => self.scan,
            Phase::Update => self.update,
        }
    }
}

/// Lists of values whose cross product is the grid. `workload.so` and
/// `workload.policy` are ignored; the `so` and `policies` lists set them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub backends: Vec<Backend>,
    pub buffers: Vec<BufferSize>,
    pub so: Vec<f64>,
    pub jts: Vec<JoinType>,
    pub policies: Vec<IncludedColumns>,
    pub structures: Vec<StructureKind>,
    pub phases: Vec<Phase>,
    pub workload: WorkloadConfig,
    pub ops: PhaseOps,
}

/// Rows in the default grid: 2 backends × 2 buffers × 4 selectivities ×
/// 2 join types × 3 policies × 3 structures × 4 phases.
pub const DEFAULT_GRID_ROWS: usize = 2 * 2 * 4 * 2 * 3 * 3 * 4;

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            backends: Backend::ALL.to_vec(),
            buffers: BufferSize::ALL.to_vec(),
            so: vec![0.05, 0.19, 0.5, 1.0],
            jts: vec![JoinType::Inner, JoinType::FullOuter],
            policies: IncludedColumns::ALL.to_vec(),
            structures: StructureKind::ALL.to_vec(),
            phases: Phase::ALL.to_vec(),
            workload: WorkloadConfig::default(),
            ops: PhaseOps::default(),
        }
    }
}

impl GridSpec {
    /// Parses TOML; errors carry the offending line and column.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let spec: GridSpec = toml::from_str(text).map_err(|e| BenchError::GridParse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        spec.validate().map_err(|message| BenchError::GridParse {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<(), String> {
        let lists = [
            ("backends", self.backends.is_empty()),
            ("buffers", self.buffers.is_empty()),
            ("so", self.so.is_empty()),
            ("jts", self.jts.is_empty()),
            ("policies", self.policies.is_empty()),
            ("structures", self.structures.is_empty()),
            ("phases", self.phases.is_empty()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, empty)| *empty) {
            return Err(format!("`{name}` must list at least one value"));
        }
        if let Some(so) = self.so.iter().find(|so| !(0.0..=1.0).contains(*so)) {
            return Err(format!("`so` values must lie in [0, 1], got {so}"));
        }
        if let Some(jt) = self
            .jts
            .iter()
            .find(|jt| !matches!(jt, JoinType::Inner | JoinType::FullOuter))
        {
            return Err(format!("`jts` accepts inner and full_outer, got {jt}"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.workload.seed = seed;
        self
    }

    /// Every grid point, innermost loop last: backend, buffer, so, jt,
    /// policy, structure, phase.
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &backend in &self.backends {
            for &buffer in &self.buffers {
                for &so in &self.so {
                    for &jt in &self.jts {
                        for &policy in &self.policies {
                            for &structure in &self.structures {
                                for &phase in &self.phases {
                                    out.push(ExperimentConfig {
                                        backend,
                                        buffer,
                                        so,
                                        jt,
                                        policy,
                                        structure,
                                        phase,
                                        workload: self.workload,
                                        ops: self.ops.of(phase),
                                        view_join: None,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs every grid point in order. `progress` sees each finished report.
pub fn run_grid(
    spec: &GridSpec,
    mut progress: impl FnMut(usize, &MetricsReport),
) -> Result<Vec<MetricsReport>> {
    spec.validate().map_err(BenchError::Config)?;
    // generation ignores the policy, so one database per selectivity
    let mut databases: HashMap<u64, Database> = HashMap::new();
    let mut reports = Vec::new();
    for (n, cfg) in spec.configs().into_iter().enumerate() {
        let db = databases
            .entry(cfg.so.to_bits())
            .or_insert_with(|| generate(&cfg.effective_workload()));
        let report = run_experiment_on(&cfg, db)?;
        progress(n, &report);
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_count() {
        assert_eq!(GridSpec::default().configs().len(), DEFAULT_GRID_ROWS);
    }

    #[test]
    fn shipped_default_file_matches_builtin() {
        let path = Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../grids/default.toml"
        ));
        assert_eq!(GridSpec::load(path).unwrap(), GridSpec::default());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let spec = GridSpec::parse(
            "backends = [\"lsm\"]\n[ops]\npoint = 3\n",
            Path::new("g.toml"),
        )
        .unwrap();
        assert_eq!(spec.backends, vec![Backend::Lsm]);
        assert_eq!(spec.ops.point, 3);
        assert_eq!(spec.ops.scan, PhaseOps::default().scan);
        assert_eq!(spec.configs().len(), DEFAULT_GRID_ROWS / 2);
    }

    #[test]
    fn parse_error_names_line() {
        let text = "backends = [\"btree\"]\nbuffers = [\"tiny\"]\n";
        let err = GridSpec::parse(text, Path::new("g.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = GridSpec::parse("\n\nbackend = [\"btree\"]\n", Path::new("g.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn semantic_errors_are_reported() {
        assert!(GridSpec::parse("so = [1.5]", Path::new("g.toml")).is_err());
        assert!(GridSpec::parse("jts = [\"left_semi\"]", Path::new("g.toml")).is_err());
        assert!(GridSpec::parse("phases = []", Path::new("g.toml")).is_err());
    }
}
